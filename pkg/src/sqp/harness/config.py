"""Experiment configuration: a YAML mapping validated before any work starts.

Schema (all keys optional unless marked)::

    corpus:                      # required unless `desk` is given
      documents: [docs.trec]     #   one path or a list
      topics: topics.trec
      qrels: qrels.txt
    desk: {seed: 7, n_docs: 4000}   # generate the synthetic desk corpus instead
    tokenizer: {lowercase: true, stem: true, stopwords: default}  # or none / a file path
    threads:
      grid: desk                 # desk | full | custom
      weighting: [BM25, PL2]     # custom only
      expansion: [None, Bo1]     # custom only
      D: [0, 5]                  # custom only
      T: [0, 5]                  # custom only
      beta: 0.4
      params: {BM25: {k1: 1.2, b: 0.75}}
    measure: AP                  # AP | nDCG@10 | P@10 (training measure)
    modes: [ERisk-SQE, ERisk-SQP, Best-SQE]
    trials: 3
    seed: 42
    lambda: 1.0
    K: 20                        # feature top-K
    l2r_K: 100                   # L2R-D rerank depth
    depth: 1000
    parallelism: 1               # Gen phase only
    router: {reg: 0.01, epochs: 300, lr: 1.0}
    fusion_norm: minmax          # minmax | none
    output: out/experiment

Relative paths resolve against the config file's directory.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..corpus import Pipeline, default_stopwords
from ..errors import ConfigError, SQPError
from ..evalkit import MEASURES
from ..expansion import EXPANSION_IDS
from ..gridpoints import (DESK_D, DESK_Q, DESK_T, DESK_W, FULL_D, FULL_T, ProcessingThread,
                          enumerate_threads)
from ..retrieval import MODEL_IDS, MODEL_PARAMS, WeightingModel
from ..selector import MODES

_TOP_KEYS = {"corpus", "desk", "tokenizer", "threads", "measure", "modes", "trials", "seed",
             "lambda", "K", "l2r_K", "depth", "parallelism", "router", "fusion_norm", "output"}


@dataclass
class ExperimentConfig:
    documents: list[Path] = field(default_factory=list)
    topics: Path | None = None
    qrels: Path | None = None
    desk: dict[str, Any] | None = None
    lowercase: bool = True
    stem: bool = True
    stopwords: str = "default"
    grid: str = "desk"
    weighting: tuple[str, ...] = DESK_W
    expansion: tuple[str, ...] = DESK_Q
    D: tuple[int, ...] = DESK_D
    T: tuple[int, ...] = DESK_T
    beta: float = 0.4
    params: dict[str, dict[str, float]] = field(default_factory=dict)
    measure: str = "AP"
    modes: tuple[str, ...] = MODES
    trials: int = 3
    seed: int = 42
    lam: float = 1.0
    K: int = 20
    l2r_K: int = 100
    depth: int = 1000
    parallelism: int = 1
    reg: float = 0.01
    epochs: int = 300
    lr: float = 1.0
    fusion_norm: str = "minmax"
    output: Path = Path("out/experiment")

    @classmethod
    def from_file(cls, path: str | Path, check_corpus: bool = True, **overrides) -> "ExperimentConfig":
        path = Path(path)
        try:
            data = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except (OSError, yaml.YAMLError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(data, base=path.parent, check_corpus=check_corpus, **overrides)

    @classmethod
    def from_dict(cls, data: Mapping[str, Any], base: str | Path = ".", check_corpus: bool = True,
                  **overrides) -> "ExperimentConfig":
        if not isinstance(data, Mapping):
            raise ConfigError("config must be a mapping")
        unknown = set(data) - _TOP_KEYS
        if unknown:
            raise ConfigError(f"unknown config key(s): {', '.join(sorted(unknown))}")
        base = Path(base)
        cfg = cls()

        def resolve(p) -> Path:
            p = Path(p)
            return p if p.is_absolute() else base / p

        corpus = data.get("corpus")
        if corpus is not None:
            _only(corpus, {"documents", "topics", "qrels"}, "corpus")
            docs = corpus.get("documents", [])
            cfg.documents = [resolve(p) for p in ([docs] if isinstance(docs, str) else docs)]
            cfg.topics = resolve(corpus["topics"]) if "topics" in corpus else None
            cfg.qrels = resolve(corpus["qrels"]) if "qrels" in corpus else None
        if "desk" in data:
            cfg.desk = dict(data["desk"] or {})
        tok = data.get("tokenizer", {})
        _only(tok, {"lowercase", "stem", "stopwords"}, "tokenizer")
        cfg.lowercase = bool(tok.get("lowercase", True))
        cfg.stem = bool(tok.get("stem", True))
        sw = tok.get("stopwords", "default")
        cfg.stopwords = sw if sw in ("default", "none") else str(resolve(sw))

        th = data.get("threads", {})
        _only(th, {"grid", "weighting", "expansion", "D", "T", "beta", "params"}, "threads")
        cfg.grid = th.get("grid", "desk")
        if cfg.grid == "full":
            cfg.weighting, cfg.expansion, cfg.D, cfg.T = MODEL_IDS, EXPANSION_IDS, FULL_D, FULL_T
        elif cfg.grid == "custom":
            try:
                cfg.weighting = tuple(th["weighting"])
                cfg.expansion = tuple(th["expansion"])
                cfg.D = tuple(int(d) for d in th["D"])
                cfg.T = tuple(int(t) for t in th["T"])
            except KeyError as exc:
                raise ConfigError(f"threads.grid=custom requires threads.{exc.args[0]}") from None
        elif cfg.grid != "desk":
            raise ConfigError(f"threads.grid must be desk, full or custom, not {cfg.grid!r}")
        cfg.beta = float(th.get("beta", 0.4))
        cfg.params = {k: dict(v) for k, v in (th.get("params") or {}).items()}

        for key in ("measure", "trials", "seed", "K", "l2r_K", "depth", "parallelism", "fusion_norm"):
            if key in data:
                setattr(cfg, key, data[key])
        if "lambda" in data:
            cfg.lam = data["lambda"]
        if "modes" in data:
            cfg.modes = tuple(data["modes"] or ())
        router = data.get("router", {})
        _only(router, {"reg", "epochs", "lr"}, "router")
        cfg.reg = float(router.get("reg", cfg.reg))
        cfg.epochs = int(router.get("epochs", cfg.epochs))
        cfg.lr = float(router.get("lr", cfg.lr))
        if "output" in data:
            cfg.output = resolve(data["output"])
        for k, v in overrides.items():
            if v is not None:
                setattr(cfg, k, v)
        cfg.validate(check_corpus)
        return cfg

    def validate(self, check_corpus: bool = True) -> None:
        """Raise ConfigError on the first problem; ``check_corpus`` also requires the corpus files."""
        if check_corpus and self.desk is None:
            if not self.documents or self.topics is None or self.qrels is None:
                raise ConfigError("corpus.documents, corpus.topics and corpus.qrels are required "
                                  "(or give a `desk` section)")
            for p in [*self.documents, self.topics, self.qrels]:
                if not Path(p).exists():
                    raise ConfigError(f"corpus file not found: {p}")
        if self.measure not in MEASURES:
            raise ConfigError(f"measure must be one of {', '.join(MEASURES)}")
        bad = [m for m in self.modes if m not in MODES]
        if bad:
            raise ConfigError(f"unknown mode(s) {bad}; known: {', '.join(MODES)}")
        for name in ("trials", "K", "l2r_K", "depth", "parallelism", "epochs"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v!r}")
        if not isinstance(self.seed, int):
            raise ConfigError("seed must be an integer")
        if not (isinstance(self.lam, (int, float)) and self.lam >= 0):
            raise ConfigError("lambda must be >= 0")
        if self.reg < 0 or self.lr <= 0:
            raise ConfigError("router.reg must be >= 0 and router.lr > 0")
        if self.fusion_norm not in ("minmax", "none"):
            raise ConfigError("fusion_norm must be minmax or none")
        for w, p in self.params.items():
            if w not in MODEL_PARAMS:
                raise ConfigError(f"threads.params: unknown model {w!r}")
        try:
            self.threads()
        except SQPError as exc:
            raise ConfigError(f"threads: {exc}") from None

    def pipeline(self) -> Pipeline:
        if self.stopwords == "default":
            stop = default_stopwords()
        elif self.stopwords == "none":
            stop = None
        else:
            stop = frozenset(w for w in Path(self.stopwords).read_text().split() if not w.startswith("#"))
        return Pipeline(lowercase=self.lowercase, stopwords=stop, stem=self.stem)

    def weighting_models(self) -> list[WeightingModel]:
        return [WeightingModel.create(w, **self.params.get(w, {})) for w in self.weighting]

    def threads(self) -> list[ProcessingThread]:
        return enumerate_threads(self.weighting_models(), self.expansion, self.D, self.T, self.beta)


def _only(section, allowed: set[str], name: str) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError(f"{name} must be a mapping")
    unknown = set(section) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) in {name}: {', '.join(sorted(unknown))}")
