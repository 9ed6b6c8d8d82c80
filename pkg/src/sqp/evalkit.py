"""Effectiveness metrics, fold plans, summary statistics and paired t-tests."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy import stats

from .corpus import Qrels
from .errors import SQPError


def _doc_ids(run) -> Sequence[str]:
    if run is None:
        return ()
    return getattr(run, "doc_ids", run)


def average_precision(run, qrels: Qrels, topic: str) -> float:
    """Uninterpolated AP over the whole run; 0 when the topic has no relevant docs."""
    grades = qrels.grades(topic)
    R = sum(1 for g in grades.values() if g > 0)
    if R == 0:
        return 0.0
    hits = 0
    total = 0.0
    for rank, doc in enumerate(_doc_ids(run), 1):
        if grades.get(doc, 0) > 0:
            hits += 1
            total += hits / rank
    return total / R


def precision_at_10(run, qrels: Qrels, topic: str) -> float:
    grades = qrels.grades(topic)
    return sum(1 for d in _doc_ids(run)[:10] if grades.get(d, 0) > 0) / 10.0


def ndcg_at_10(run, qrels: Qrels, topic: str) -> float:
    """Linear-gain nDCG@10 (trec_eval ``ndcg_cut_10``)."""
    grades = qrels.grades(topic)
    ideal = sorted((g for g in grades.values() if g > 0), reverse=True)[:10]
    if not ideal:
        return 0.0
    idcg = sum(g / math.log2(i + 2) for i, g in enumerate(ideal))
    dcg = sum(grades.get(d, 0) / math.log2(i + 2) for i, d in enumerate(_doc_ids(run)[:10])
              if grades.get(d, 0) > 0)
    return dcg / idcg


MEASURES: dict[str, Callable] = {
    "AP": average_precision,
    "nDCG@10": ndcg_at_10,
    "P@10": precision_at_10,
}


def metric(name: str) -> Callable:
    try:
        return MEASURES[name]
    except KeyError:
        raise SQPError(f"unknown measure {name!r}; known: {', '.join(MEASURES)}") from None


def evaluate_run(runs: Mapping[str, object], qrels: Qrels, topics: Sequence[str],
                 measures: Sequence[str] = tuple(MEASURES)) -> dict[str, dict[str, float]]:
    """Per-topic values ``{measure: {topic: value}}``; missing runs score 0."""
    return {m: {t: metric(m)(runs.get(t), qrels, t) for t in topics} for m in measures}


def write_metrics(path: str | Path, values: Mapping[str, Mapping[str, float]]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("topic_id\tmetric\tvalue\n")
        for m, per_topic in values.items():
            for t, v in per_topic.items():
                fh.write(f"{t}\t{m}\t{v!r}\n")


# --- cross-validation --------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    """Per trial, a two-way split (Q_A, Q_Abar) of the topic set."""

    trials: int
    seed: int
    assignment: tuple[tuple[tuple[str, ...], tuple[str, ...]], ...]

    def folds(self):
        """Yield (trial, fold, train, test); fold 0 trains on Q_A, fold 1 on Q_Abar."""
        for trial, (a, abar) in enumerate(self.assignment):
            yield trial, 0, a, abar
            yield trial, 1, abar, a


def make_folds(topic_ids: Sequence[str], trials: int = 3, seed: int = 42) -> FoldPlan:
    """Shuffle with numpy's PCG64 (seeded once), split each permutation in half.

    The first half takes the extra topic when the count is odd.
    """
    topics = list(topic_ids)
    if len(topics) < 2:
        raise SQPError(f"need at least 2 topics for two folds, got {len(topics)}")
    if len(set(topics)) != len(topics):
        raise SQPError("duplicate topic ids")
    if trials < 1:
        raise SQPError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    half = (len(topics) + 1) // 2
    out = []
    for _ in range(trials):
        perm = rng.permutation(len(topics))
        shuffled = [topics[i] for i in perm]
        out.append((tuple(shuffled[:half]), tuple(shuffled[half:])))
    return FoldPlan(trials, seed, tuple(out))


# --- statistics --------------------------------------------------------------

@dataclass(frozen=True)
class SummaryStat:
    mean: float
    std: float
    n: int


def summarize(measurements: Sequence[float], expected: int | None = 6) -> SummaryStat:
    """Mean and sample (n-1) standard deviation."""
    values = np.asarray(measurements, dtype=np.float64)
    if expected is not None and len(values) != expected:
        raise SQPError(f"expected {expected} measurements, got {len(values)}")
    if len(values) == 0:
        raise SQPError("no measurements")
    std = float(values.std(ddof=1)) if len(values) > 1 else 0.0
    return SummaryStat(float(values.mean()), std, len(values))


def paired_t_test(a: Sequence[float], b: Sequence[float]) -> float:
    """Two-tailed paired Student t-test p-value (df = n - 1).

    Zero-variance differences give p = 1 when all are zero, else p = 0.
    """
    x = np.asarray(a, dtype=np.float64)
    y = np.asarray(b, dtype=np.float64)
    if x.shape != y.shape:
        raise SQPError(f"paired samples differ in length: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise SQPError("paired t-test needs at least 2 pairs")
    d = x - y
    if not d.any():
        return 1.0
    sd = d.std(ddof=1)
    if sd == 0.0:
        return 0.0
    t = d.mean() / (sd / math.sqrt(len(d)))
    return float(2.0 * stats.t.sf(abs(t), len(d) - 1))


def bonferroni_significant(p: float, comparisons: int, alpha: float = 0.05) -> bool:
    return p < alpha / comparisons
