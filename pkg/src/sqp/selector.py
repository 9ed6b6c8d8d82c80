"""Candidate-pair selection, the two-thread router, CombSum and the L2R-D baseline."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _accel
from .corpus import InvertedIndex, Qrels, Topic
from .errors import FormatError, SQPError
from .features import (DIM, QueryFeatures, Scaler, CandidateLabels, document_features,
                       feature_config_hash)
from .gridpoints import GridOfPoints, ProcessingThread
from .retrieval import DEFAULT_DEPTH, ScoredList, WeightedQuery, bm25_default

MODES = ("ERisk-SQE", "ERisk-SQP", "Best-SQE")


@dataclass(frozen=True)
class RiskGain:
    reward: float
    risk: float
    lam: float

    @property
    def gain(self) -> float:
        return self.reward - self.lam * self.risk


@dataclass(frozen=True)
class CandidatePair:
    c1: ProcessingThread
    c2: ProcessingThread
    mode: str
    risk_gain: RiskGain | None = None

    def __post_init__(self):
        if self.mode not in MODES:
            raise SQPError(f"unknown mode {self.mode!r}; known: {', '.join(MODES)}")
        if self.c1.thread_id == self.c2.thread_id:
            raise SQPError("candidate threads must differ")
        if self.mode.endswith("SQE"):
            if self.c1.W != self.c2.W or self.c1.expanded == self.c2.expanded:
                raise SQPError("SQE pair must share W and differ in expansion")


def _mean(values) -> float:
    # fsum is exactly rounded, so equal multisets give equal means in any order
    return math.fsum(values) / len(values)


def _argmax_canonical(grid: GridOfPoints, values: Sequence[float], rows: Sequence[int]) -> int:
    best = None
    for r in rows:
        v = values[r]
        if best is None or v > values[best] or (
                v == values[best] and grid.threads[r].sort_key() < grid.threads[best].sort_key()):
            best = r
    return best


def row_means(grid: GridOfPoints) -> list[float]:
    return [_mean(row.tolist()) for row in grid.eff]


def select_c1(grid_train: GridOfPoints) -> ProcessingThread:
    """Thread with the highest mean training effectiveness."""
    if len(grid_train) == 0 or len(grid_train.queries) == 0:
        raise SQPError("empty grid")
    means = row_means(grid_train)
    return grid_train.threads[_argmax_canonical(grid_train, means, range(len(grid_train)))]


def sqe_counterpart(grid_train: GridOfPoints, c1: ProcessingThread) -> ProcessingThread:
    """Expansion counterpart of ``c1``: same W with expansion toggled."""
    if c1.expanded:
        return c1.unexpanded()
    rows = [i for i, th in enumerate(grid_train.threads) if th.W == c1.W and th.expanded]
    if not rows:
        raise SQPError(f"grid has no expanded thread with W={c1.W.model_id}; "
                       "regenerate the grid with an expanding Q for this model")
    means = row_means(grid_train)
    return grid_train.threads[_argmax_canonical(grid_train, means, rows)]


def risk_gain(grid: GridOfPoints, c1: ProcessingThread, c: ProcessingThread, lam: float = 1.0) -> RiskGain:
    base = grid.row(c1).tolist()
    cand = grid.row(c).tolist()
    reward = _mean([max(0.0, x - y) for x, y in zip(cand, base)])
    risk = _mean([max(0.0, y - x) for x, y in zip(cand, base)])
    return RiskGain(reward, risk, lam)


def sqp_second(grid_train: GridOfPoints, c1: ProcessingThread,
               lam: float = 1.0) -> tuple[ProcessingThread, RiskGain]:
    """Thread maximising reward - lam * risk against ``c1`` (greedy diversification)."""
    if len(grid_train) < 2:
        raise SQPError("SQP needs at least two threads in the grid")
    if lam < 0:
        raise SQPError("lambda must be >= 0")
    i1 = grid_train.row_of(c1)
    rows = [i for i in range(len(grid_train)) if i != i1]
    rg = {i: risk_gain(grid_train, c1, grid_train.threads[i], lam) for i in rows}
    gains = {i: r.gain for i, r in rg.items()}
    best = _argmax_canonical(grid_train, gains, rows)
    return grid_train.threads[best], rg[best]


def select_pair(grid_train: GridOfPoints, mode: str, lam: float = 1.0) -> CandidatePair:
    """Both SQE modes pair select_c1 with its counterpart; SQP adds the max-gain thread."""
    c1 = select_c1(grid_train)
    if mode == "ERisk-SQP":
        c2, rg = sqp_second(grid_train, c1, lam)
        return CandidatePair(c1, c2, mode, rg)
    if mode in ("ERisk-SQE", "Best-SQE"):
        c2 = sqe_counterpart(grid_train, c1)
        return CandidatePair(c1, c2, mode, risk_gain(grid_train, c1, c2, lam) if c2 in grid_train else None)
    raise SQPError(f"unknown mode {mode!r}")


# --- router ------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class RoutingModel:
    """Linear scorer over standardised query features; score > 0 picks c2."""

    weights: np.ndarray
    bias: float
    c1: ProcessingThread
    c2: ProcessingThread
    mode: str = "ERisk-SQE"
    scaler: Scaler | None = None
    feature_hash: str = field(default_factory=feature_config_hash)

    @property
    def dim(self) -> int:
        return len(self.weights)

    def decision(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.dim,):
            raise SQPError(f"feature dimension {x.shape} != model dimension {self.dim}")
        if self.scaler is not None:
            x = self.scaler.transform(x)
        return float(x @ self.weights + self.bias)

    @property
    def is_zero(self) -> bool:
        return not self.weights.any() and self.bias == 0.0


def zero_model(c1, c2, mode="ERisk-SQE", dim: int = DIM) -> RoutingModel:
    return RoutingModel(np.zeros(dim), 0.0, c1, c2, mode)


def _as_matrix(features) -> tuple[list[str], np.ndarray]:
    if isinstance(features, np.ndarray):
        return [str(i) for i in range(len(features))], np.atleast_2d(features).astype(np.float64)
    return [f.topic_id for f in features], np.array([f.vector for f in features], dtype=np.float64)


def train_router(features: Sequence[QueryFeatures] | np.ndarray,
                 labels: Sequence[CandidateLabels] | np.ndarray,
                 pair: CandidatePair, reg: float = 0.01, epochs: int = 300,
                 seed: int = 42, lr: float = 1.0, dim: int | None = None) -> RoutingModel:
    """Fit the router on margin-weighted hinge loss.

    ``labels`` is either per-query ``CandidateLabels`` (aligned with
    ``features``) or a precomputed array of deltas eff_c2 - eff_c1. Queries
    with zero delta carry no loss; all-zero deltas give the zero model.
    ``seed`` is accepted for interface stability; full-batch descent is
    deterministic without it.
    """
    del seed
    topics, X = _as_matrix(features)
    expected = dim if dim is not None else X.shape[1]
    if X.shape[1] != expected:
        raise SQPError(f"feature dimension {X.shape[1]} != expected {expected}")
    if isinstance(labels, np.ndarray):
        delta = labels.astype(np.float64)
    else:
        by_topic = {lab.topic_id: lab for lab in labels}
        c1, c2 = pair.c1.thread_id, pair.c2.thread_id
        try:
            delta = np.array([by_topic[t].eff[c2] - by_topic[t].eff[c1] for t in topics])
        except KeyError as exc:
            raise SQPError(f"missing label for {exc}") from None
    if len(delta) != len(X):
        raise SQPError(f"{len(X)} feature rows but {len(delta)} labels")
    if not delta.any():
        return zero_model(pair.c1, pair.c2, pair.mode, X.shape[1])
    scaler = Scaler.fit(X)
    Z = scaler.transform(X)
    keep = delta != 0
    w, b = _accel.hinge_descent(np.ascontiguousarray(Z[keep]), np.sign(delta[keep]),
                                np.abs(delta[keep]), float(reg), int(epochs), float(lr), True)
    return RoutingModel(np.asarray(w), float(b), pair.c1, pair.c2, pair.mode, scaler)


def route(model: RoutingModel, features: QueryFeatures | np.ndarray) -> ProcessingThread:
    """c2 when the decision value is strictly positive, otherwise c1."""
    x = features.vector if isinstance(features, QueryFeatures) else features
    return model.c2 if model.decision(x) > 0.0 else model.c1


# --- fusion --------------------------------------------------------------------

def _normalise(run: ScoredList, norm: str) -> dict[str, float]:
    s = run.scores
    if len(s) == 0:
        return {}
    if norm == "none":
        return dict(zip(run.doc_ids, s.tolist()))
    lo, hi = float(s.min()), float(s.max())
    if hi == lo:
        return {d: 1.0 for d in run.doc_ids}
    return {d: (v - lo) / (hi - lo) for d, v in zip(run.doc_ids, s.tolist())}


def combsum(run_a: ScoredList, run_b: ScoredList, depth: int = DEFAULT_DEPTH,
            norm: str = "minmax") -> ScoredList:
    """Sum of per-run min-max normalised scores; missing docs contribute 0."""
    if run_a.topic_id != run_b.topic_id:
        raise SQPError(f"topic mismatch: {run_a.topic_id} vs {run_b.topic_id}")
    if norm not in ("minmax", "none"):
        raise SQPError(f"unknown fusion normalisation {norm!r}")
    na, nb = _normalise(run_a, norm), _normalise(run_b, norm)
    fused = dict(na)
    for d, v in nb.items():
        fused[d] = fused.get(d, 0.0) + v
    return ScoredList.from_pairs(run_a.topic_id, fused.items(), depth)


# --- document-level learning to rank --------------------------------------------

@dataclass(frozen=True, eq=False)
class DocumentRanker:
    weights: np.ndarray
    scaler: Scaler
    K: int


def _doc_matrix(index: InvertedIndex, topic: Topic, run: ScoredList, K: int) -> np.ndarray:
    docs = np.array([index.doc_index[d] for d in run.doc_ids[:K]], dtype=np.int64)
    return document_features(index, topic.title_terms, docs, run.scores[:K])


def document_training_data(index: InvertedIndex, topics: Sequence[Topic], qrels: Qrels,
                           K: int = 100) -> tuple[list[np.ndarray], list[np.ndarray]]:
    """Per-topic feature matrices and grades for the BM25 top-K documents."""
    mats, grades = [], []
    for t in topics:
        run = bm25_default(index, WeightedQuery.from_topic(t), K)
        if len(run) == 0:
            continue
        mats.append(_doc_matrix(index, t, run, K))
        grades.append(np.array([qrels.grade(t.topic_id, d) for d in run.doc_ids[:K]]))
    return mats, grades


def fit_document_ranker(mats: Sequence[np.ndarray], grades: Sequence[np.ndarray], K: int = 100,
                        reg: float = 0.01, epochs: int = 200, lr: float = 1.0) -> DocumentRanker:
    """Pairwise hinge ranker: every (higher grade, lower grade) pair within a topic."""
    if not any((g > 0).any() for g in grades):
        raise SQPError("no relevant documents among the training topics' BM25 top-K")
    scaler = Scaler.fit(np.vstack(mats))
    diffs = []
    for X, g in zip(mats, grades):
        Z = scaler.transform(X)
        hi, lo = np.nonzero(g[:, None] > g[None, :])
        if len(hi):
            diffs.append(Z[hi] - Z[lo])
    if not diffs:
        raise SQPError("no preference pairs among the training topics")
    P = np.ascontiguousarray(np.vstack(diffs))
    w, _ = _accel.hinge_descent(P, np.ones(len(P)), np.ones(len(P)), float(reg), int(epochs),
                                float(lr), False)
    return DocumentRanker(np.asarray(w), scaler, K)


def train_document_ranker(index: InvertedIndex, topics: Sequence[Topic], qrels: Qrels,
                          K: int = 100, reg: float = 0.01, epochs: int = 200,
                          lr: float = 1.0) -> DocumentRanker:
    mats, grades = document_training_data(index, topics, qrels, K)
    return fit_document_ranker(mats, grades, K, reg, epochs, lr)


def rerank(index: InvertedIndex, topic: Topic, ranker: DocumentRanker,
           depth: int = DEFAULT_DEPTH) -> ScoredList:
    """Rerank the BM25 top-K by the learned score; lower ranks keep BM25 order.

    Output scores are rank-derived (n - position) so the list stays strictly
    ordered regardless of learned-score ties.
    """
    run = bm25_default(index, WeightedQuery.from_topic(topic), depth)
    if len(run) == 0:
        return run
    k = min(ranker.K, len(run))
    learned = ranker.scaler.transform(_doc_matrix(index, topic, run, k)) @ ranker.weights
    head = sorted(range(k), key=lambda i: (-learned[i], i))
    order = head + list(range(k, len(run)))
    n = len(order)
    return ScoredList(run.topic_id, tuple(run.doc_ids[i] for i in order),
                      np.arange(n, 0, -1, dtype=np.float64), depth)


def l2r_document_baseline(index: InvertedIndex, topics_train: Sequence[Topic], qrels_train: Qrels,
                          topics_test: Sequence[Topic], K: int = 100,
                          depth: int = DEFAULT_DEPTH, **train_kw) -> dict[str, ScoredList]:
    ranker = train_document_ranker(index, topics_train, qrels_train, K, **train_kw)
    return {t.topic_id: rerank(index, t, ranker, depth) for t in topics_test}


# --- file formats ---------------------------------------------------------------

def _floats(values) -> str:
    return " ".join(repr(float(v)) for v in values)


def write_model(path: str | Path, model: RoutingModel) -> None:
    scaler = model.scaler or Scaler.identity(model.dim)
    lines = [
        "# sqp routing model v1",
        f"feature_hash\t{model.feature_hash}",
        f"mode\t{model.mode}",
        f"c1\t{model.c1.thread_id}",
        f"c2\t{model.c2.thread_id}",
        f"dim\t{model.dim}",
        f"bias\t{model.bias!r}",
        f"weights\t{_floats(model.weights)}",
        f"scaler_mean\t{_floats(scaler.mean)}",
        f"scaler_scale\t{_floats(scaler.scale)}",
    ]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_model(path: str | Path, params=None, beta: float | None = None) -> RoutingModel:
    kv: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("\t")
        if not sep:
            raise FormatError("expected key<TAB>value", path, lineno)
        kv[key] = value
    try:
        dim = int(kv["dim"])
        vec = lambda k: np.array([float(v) for v in kv[k].split()]) if kv[k] else np.zeros(0)
        weights = vec("weights")
        scaler = Scaler(vec("scaler_mean"), vec("scaler_scale"))
        model = RoutingModel(weights, float(kv["bias"]),
                             ProcessingThread.parse(kv["c1"], params, beta),
                             ProcessingThread.parse(kv["c2"], params, beta),
                             kv["mode"], scaler, kv["feature_hash"])
    except KeyError as exc:
        raise FormatError(f"missing key {exc}", path) from None
    if len(weights) != dim or len(scaler.mean) != dim or len(scaler.scale) != dim:
        raise FormatError("vector length does not match dim", path)
    return model


def write_manifest(path: str | Path, pair: CandidatePair) -> None:
    lines = [f"mode\t{pair.mode}", f"c1\t{pair.c1.thread_id}", f"c2\t{pair.c2.thread_id}"]
    if pair.risk_gain is not None:
        rg = pair.risk_gain
        lines += [f"lambda\t{rg.lam!r}", f"reward\t{rg.reward!r}", f"risk\t{rg.risk!r}",
                  f"gain\t{rg.gain!r}"]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path: str | Path, params=None, beta: float | None = None) -> CandidatePair:
    kv = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        key, sep, value = line.partition("\t")
        if not sep:
            raise FormatError("expected key<TAB>value", path, lineno)
        kv[key] = value
    try:
        rg = None
        if "reward" in kv:
            rg = RiskGain(float(kv["reward"]), float(kv["risk"]), float(kv["lambda"]))
        return CandidatePair(ProcessingThread.parse(kv["c1"], params, beta),
                             ProcessingThread.parse(kv["c2"], params, beta), kv["mode"], rg)
    except KeyError as exc:
        raise FormatError(f"missing key {exc}", path) from None
