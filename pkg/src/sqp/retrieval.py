"""Term-weighting models and ranked retrieval over an :class:`InvertedIndex`."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from . import _accel
from .corpus import InvertedIndex, Topic
from .errors import FormatError, SQPError

MODEL_IDS = ("BM25", "TFIDF", "DirichletLM", "HiemstraLM", "PL2", "InL2", "DPH", "LGD")
_CODES = {m: i for i, m in enumerate(MODEL_IDS)}

# Parameter vector layout shared with the kernels: k1, b, mu, lambda, c.
PARAM_NAMES = ("k1", "b", "mu", "lambda", "c")
DEFAULT_PARAMS = {"k1": 1.2, "b": 0.75, "mu": 2500.0, "lambda": 0.15, "c": 1.0}
MODEL_PARAMS = {
    "BM25": ("k1", "b"),
    "TFIDF": ("k1", "b"),
    "DirichletLM": ("mu",),
    "HiemstraLM": ("lambda",),
    "PL2": ("c",),
    "InL2": ("c",),
    "DPH": (),
    "LGD": ("c",),
}
DEFAULT_DEPTH = 1000


@dataclass(frozen=True)
class WeightingModel:
    model_id: str
    params: tuple[tuple[str, float], ...] = ()

    def __post_init__(self):
        if self.model_id not in _CODES:
            raise SQPError(f"unknown weighting model {self.model_id!r}; known: {', '.join(MODEL_IDS)}")
        allowed = MODEL_PARAMS[self.model_id]
        merged = {k: DEFAULT_PARAMS[k] for k in allowed}
        for k, v in self.params:
            if k not in allowed:
                raise SQPError(f"{self.model_id} takes no parameter {k!r}")
            merged[k] = float(v)
        _check_ranges(self.model_id, merged)
        object.__setattr__(self, "params", tuple(sorted(merged.items())))

    @classmethod
    def create(cls, model_id: str, **params: float) -> "WeightingModel":
        key = {"lam": "lambda"}
        return cls(model_id, tuple((key.get(k, k), v) for k, v in params.items()))

    @property
    def code(self) -> int:
        return _CODES[self.model_id]

    def param(self, name: str) -> float:
        return dict(self.params).get(name, DEFAULT_PARAMS[name])

    def param_vector(self) -> np.ndarray:
        return np.array([self.param(n) for n in PARAM_NAMES], dtype=np.float64)


def _check_ranges(model_id: str, p: Mapping[str, float]) -> None:
    bad = []
    if "b" in p and not 0.0 <= p["b"] <= 1.0:
        bad.append("b in [0,1]")
    if "k1" in p and not p["k1"] > 0:
        bad.append("k1 > 0")
    if "mu" in p and not p["mu"] > 0:
        bad.append("mu > 0")
    if "lambda" in p and not 0.0 < p["lambda"] < 1.0:
        bad.append("lambda in (0,1)")
    if "c" in p and not p["c"] > 0:
        bad.append("c > 0")
    if bad:
        raise SQPError(f"{model_id}: parameter out of range ({'; '.join(bad)})")


BM25_DEFAULT = WeightingModel("BM25")


@dataclass(frozen=True)
class WeightedQuery:
    topic_id: str
    term_weights: Mapping[str, float] = field(default_factory=dict)

    def __post_init__(self):
        for t, w in self.term_weights.items():
            if not w >= 0:
                raise SQPError(f"negative weight {w} for term {t!r}")

    @classmethod
    def from_topic(cls, topic: Topic) -> "WeightedQuery":
        return cls(topic.topic_id, {t: float(n) for t, n in Counter(topic.title_terms).items()})

    @property
    def degenerate(self) -> bool:
        return not any(w > 0 for w in self.term_weights.values())


@dataclass(frozen=True, eq=False)
class ScoredList:
    """One topic's ranking, ordered by (score desc, doc_id asc)."""

    topic_id: str
    doc_ids: tuple[str, ...]
    scores: np.ndarray
    depth: int = DEFAULT_DEPTH

    def __len__(self) -> int:
        return len(self.doc_ids)

    @property
    def ranking(self) -> list[tuple[str, float]]:
        return list(zip(self.doc_ids, self.scores.tolist()))

    def __eq__(self, other) -> bool:
        if not isinstance(other, ScoredList):
            return NotImplemented
        return (self.topic_id == other.topic_id and self.doc_ids == other.doc_ids
                and np.array_equal(self.scores, other.scores))

    @classmethod
    def empty(cls, topic_id: str, depth: int = DEFAULT_DEPTH) -> "ScoredList":
        return cls(topic_id, (), np.zeros(0), depth)

    @classmethod
    def from_pairs(cls, topic_id: str, pairs: Iterable[tuple[str, float]],
                   depth: int = DEFAULT_DEPTH) -> "ScoredList":
        """Sort arbitrary (doc, score) pairs into canonical order and cut at depth."""
        ordered = sorted(pairs, key=lambda p: (-p[1], p[0]))[:depth]
        return cls(topic_id, tuple(d for d, _ in ordered),
                   np.array([s for _, s in ordered], dtype=np.float64), depth)


def query_arrays(index: InvertedIndex, query: WeightedQuery) -> tuple[np.ndarray, np.ndarray]:
    """Term ids and weights of the in-vocabulary, positively weighted terms."""
    items = sorted((t, w) for t, w in query.term_weights.items() if w > 0 and t in index.term_id)
    ids = np.array([index.term_id[t] for t, _ in items], dtype=np.int64)
    weights = np.array([w for _, w in items], dtype=np.float64)
    return ids, weights


def accumulate(index: InvertedIndex, query: WeightedQuery, model: WeightingModel,
               kernel=None) -> tuple[np.ndarray, np.ndarray]:
    """Dense score and match arrays over all documents."""
    kernel = kernel or _accel.accumulate
    ids, weights = query_arrays(index, query)
    scores = np.zeros(index.N)
    matched = np.zeros(index.N, dtype=np.bool_)
    if len(ids):
        kernel(model.code, model.param_vector(), ids, weights, index.offsets, index.post_docs,
               index.post_tfs, index.doc_length, index.df, index.cf, index.N,
               index.avg_doc_length, index.total_tokens, scores, matched)
    return scores, matched


def top_k(index: InvertedIndex, topic_id: str, scores: np.ndarray, matched: np.ndarray,
          depth: int) -> ScoredList:
    cand = np.flatnonzero(matched)
    if len(cand) == 0:
        return ScoredList.empty(topic_id, depth)
    s = scores[cand]
    if len(cand) > depth:
        # keep everything tied with the cut-off score so the tie-break stays exact
        kth = np.partition(-s, depth - 1)[depth - 1]
        keep = -s <= kth
        cand, s = cand[keep], s[keep]
    # candidates are ascending doc index == ascending doc_id
    order = np.lexsort((cand, -s))[:depth]
    return ScoredList(topic_id, tuple(index.doc_ids[i] for i in cand[order]), s[order], depth)


def score(index: InvertedIndex, query: WeightedQuery, model: WeightingModel,
          depth: int = DEFAULT_DEPTH, kernel=None) -> ScoredList:
    """Rank documents matching at least one query term."""
    if depth < 1:
        raise SQPError(f"depth must be >= 1, got {depth}")
    if query.degenerate:
        return ScoredList.empty(query.topic_id, depth)
    scores, matched = accumulate(index, query, model, kernel)
    return top_k(index, query.topic_id, scores, matched, depth)


def bm25_default(index: InvertedIndex, query: WeightedQuery, depth: int = DEFAULT_DEPTH) -> ScoredList:
    return score(index, query, BM25_DEFAULT, depth)


# --- TREC run format ----------------------------------------------------------

def format_run_lines(run: ScoredList, tag: str) -> Iterable[str]:
    for rank, (doc, s) in enumerate(zip(run.doc_ids, run.scores.tolist()), 1):
        yield f"{run.topic_id} Q0 {doc} {rank} {s!r} {tag}\n"


def write_run(path: str | Path, runs: Iterable[ScoredList], tag: str = "sqp") -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for run in runs:
            fh.writelines(format_run_lines(run, tag))


def read_run(path: str | Path, depth: int = DEFAULT_DEPTH) -> dict[str, ScoredList]:
    """Parse a TREC run file. Documents are ordered by the rank column."""
    rows: dict[str, list[tuple[int, str, float]]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            f = line.split()
            if not f:
                continue
            if len(f) != 6:
                raise FormatError(f"expected 6 fields, got {len(f)}", path, lineno)
            try:
                rows.setdefault(f[0], []).append((int(f[3]), f[2], float(f[4])))
            except ValueError as exc:
                raise FormatError(str(exc), path, lineno) from None
    out = {}
    for topic, items in rows.items():
        items.sort()
        out[topic] = ScoredList(topic, tuple(d for _, d, _ in items),
                                np.array([s for _, _, s in items]), max(depth, len(items)))
    return out
