"""Pseudo-relevance feedback: Bo1, Bo2 and KL term weighting plus query merging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .corpus import InvertedIndex
from .errors import SQPError
from .retrieval import ScoredList, WeightedQuery

EXPANSION_IDS = ("None", "Bo1", "Bo2", "KL")
DEFAULT_BETA = 0.4


@dataclass(frozen=True)
class ExpansionModel:
    model_id: str = "None"
    beta: float = DEFAULT_BETA

    def __post_init__(self):
        if self.model_id not in EXPANSION_IDS:
            raise SQPError(f"unknown expansion model {self.model_id!r}; known: {', '.join(EXPANSION_IDS)}")
        if not 0.0 <= self.beta <= 1.0:
            raise SQPError(f"beta must lie in [0,1], got {self.beta}")

    @property
    def expands(self) -> bool:
        return self.model_id != "None"


NO_EXPANSION = ExpansionModel("None")


def feedback_counts(index: InvertedIndex, first_pass: ScoredList, D: int) -> tuple[np.ndarray, np.ndarray]:
    """(term ids, summed tf) over the top ``min(D, len(first_pass))`` documents."""
    docs = [index.doc_index[d] for d in first_pass.doc_ids[:max(D, 0)]]
    if not docs:
        return np.zeros(0, dtype=np.int64), np.zeros(0)
    terms = np.concatenate([index.doc_terms[index.doc_offsets[d]:index.doc_offsets[d + 1]] for d in docs])
    tfs = np.concatenate([index.doc_tfs[index.doc_offsets[d]:index.doc_offsets[d + 1]] for d in docs])
    uniq, inv = np.unique(terms, return_inverse=True)
    tf_x = np.bincount(inv, weights=tfs.astype(np.float64))
    return uniq, tf_x


def expansion_weights(index: InvertedIndex, first_pass: ScoredList, D: int,
                      model: str | ExpansionModel = "Bo1", top: int | None = None) -> dict[str, float]:
    """Weight every candidate term of the feedback set under ``model``.

    KL keeps only terms more likely in the feedback set than in the
    collection; Bo1 and Bo2 weight every feedback term. With ``top``, only
    terms weighing at least the ``top``-th largest weight are returned (ties
    included), which is all :func:`expand` needs for ``T <= top``.
    """
    model_id = model.model_id if isinstance(model, ExpansionModel) else model
    if model_id == "None":
        return {}
    if model_id not in EXPANSION_IDS:
        raise SQPError(f"unknown expansion model {model_id!r}")
    terms, tf_x = feedback_counts(index, first_pass, D)
    if len(terms) == 0:
        return {}
    F_t = index.cf[terms].astype(np.float64)
    if model_id == "Bo1":
        lam = F_t / index.N
        w = tf_x * np.log2((1.0 + lam) / lam) + np.log2(1.0 + lam)
    elif model_id == "Bo2":
        lam = F_t * tf_x.sum() / index.total_tokens
        w = tf_x * np.log2((1.0 + lam) / lam) + np.log2(1.0 + lam)
    else:
        p_x = tf_x / tf_x.sum()
        p_c = F_t / index.total_tokens
        keep = p_x > p_c
        terms, p_x, p_c = terms[keep], p_x[keep], p_c[keep]
        w = p_x * np.log2(p_x / p_c)
    if top is not None and 0 < top < len(w):
        kth = np.partition(w, len(w) - top)[len(w) - top]
        keep = w >= kth
        terms, w = terms[keep], w[keep]
    return {index.vocab[t]: float(v) for t, v in zip(terms.tolist(), w.tolist())}


def expand(original: WeightedQuery, weights: dict[str, float], T: int,
           beta: float = DEFAULT_BETA) -> WeightedQuery:
    """Merge the top-``T`` expansion terms into ``original``.

    Each side is scaled by its own maximum; expansion weights are damped by
    ``beta``. Original terms are always retained.
    """
    if T < 0:
        raise SQPError(f"T must be >= 0, got {T}")
    if not 0.0 <= beta <= 1.0:
        raise SQPError(f"beta must lie in [0,1], got {beta}")
    if T == 0 or not weights:
        return original
    top = sorted(weights.items(), key=lambda kv: (-kv[1], kv[0]))[:T]
    max_exp = top[0][1]
    max_orig = max(original.term_weights.values(), default=0.0)
    merged: dict[str, float] = {}
    for t, w in original.term_weights.items():
        merged[t] = w / max_orig if max_orig > 0 else 0.0
    for t, w in top:
        contrib = beta * w / max_exp if max_exp > 0 else 0.0
        merged[t] = merged.get(t, 0.0) + contrib
    return WeightedQuery(original.topic_id, merged)
