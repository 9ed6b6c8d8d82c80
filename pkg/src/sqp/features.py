"""Query feature vectors aggregated from BM25 top-K query-document features.

Layout (44 dims): for each per-document feature in ``DOC_FEATURES`` the
aggregates ``AGGREGATORS`` in that order, then ``PRE_RETRIEVAL``.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import _accel
from .corpus import InvertedIndex, Topic
from .errors import FormatError
from .retrieval import DEFAULT_PARAMS, WeightedQuery, bm25_default

DOC_FEATURES = ("bm25", "doc_len", "sum_tf", "sum_log_tf", "sum_idf", "sum_tf_idf",
                "sum_norm_tf", "dirichlet_lm")
AGGREGATORS = ("min", "max", "mean", "std", "sum")
PRE_RETRIEVAL = ("query_len", "mean_idf", "max_idf", "sum_idf")
DEFAULT_K = 20

FEATURE_NAMES = tuple(f"{f}_{a}" for f in DOC_FEATURES for a in AGGREGATORS) + PRE_RETRIEVAL
DIM = len(FEATURE_NAMES)


def feature_config_hash(K: int = DEFAULT_K) -> str:
    blob = json.dumps({"names": FEATURE_NAMES, "K": K}, sort_keys=True).encode()
    return hashlib.sha1(blob).hexdigest()[:12]


def idf(index: InvertedIndex, n_t) -> np.ndarray:
    n_t = np.asarray(n_t, dtype=np.float64)
    return np.log(1.0 + (index.N - n_t + 0.5) / (n_t + 0.5))


def term_frequencies(index: InvertedIndex, term_ids: Sequence[int], docs: np.ndarray) -> np.ndarray:
    """tf matrix (len(docs), len(term_ids)) looked up from sorted postings."""
    out = np.zeros((len(docs), len(term_ids)))
    for k, t in enumerate(term_ids):
        lo, hi = index.offsets[t], index.offsets[t + 1]
        plist = index.post_docs[lo:hi]
        pos = np.searchsorted(plist, docs)
        pos_c = np.minimum(pos, len(plist) - 1)
        hit = plist[pos_c] == docs
        out[hit, k] = index.post_tfs[lo:hi][pos_c[hit]]
    return out


def document_features(index: InvertedIndex, terms: Sequence[str], docs: np.ndarray,
                      bm25_scores: np.ndarray, kernel=None) -> np.ndarray:
    """Per-document feature matrix (len(docs), 8) for distinct query ``terms``."""
    kernel = kernel or _accel.doc_features
    docs = np.asarray(docs, dtype=np.int64)
    tids = np.array([index.term_id[t] for t in sorted(set(terms)) if t in index.term_id],
                    dtype=np.int64)
    out = np.zeros((len(docs), len(DOC_FEATURES)))
    if len(docs) == 0:
        return out
    out[:, 0] = bm25_scores
    out[:, 1] = index.doc_length[docs]
    if len(tids):
        kernel(tids, docs, index.offsets, index.post_docs, index.post_tfs, index.doc_length,
               index.df, index.cf, index.N, index.avg_doc_length, index.total_tokens,
               DEFAULT_PARAMS["mu"], out)
    return out


def aggregate(matrix: np.ndarray) -> np.ndarray:
    """min, max, mean, population std, sum of each column, feature-major."""
    n = matrix.shape[0]
    total = matrix.sum(axis=0)
    mean = total / n
    std = np.sqrt(((matrix - mean) ** 2).sum(axis=0) / n)
    return np.stack([matrix.min(axis=0), matrix.max(axis=0), mean, std, total], axis=1).reshape(-1)


@dataclass(frozen=True, eq=False)
class QueryFeatures:
    topic_id: str
    vector: np.ndarray
    empty: bool = False

    def __eq__(self, other) -> bool:
        return (isinstance(other, QueryFeatures) and self.topic_id == other.topic_id
                and np.array_equal(self.vector, other.vector))


def extract_features(index: InvertedIndex, topic: Topic, K: int = DEFAULT_K) -> QueryFeatures:
    """Aggregated LETOR-style features from the BM25 top-K, plus query-only features."""
    query = WeightedQuery.from_topic(topic)
    run = bm25_default(index, query, K)
    if len(run) == 0:
        return QueryFeatures(topic.topic_id, np.zeros(DIM), empty=True)
    docs = np.array([index.doc_index[d] for d in run.doc_ids], dtype=np.int64)
    per_doc = document_features(index, topic.title_terms, docs, run.scores)
    distinct = sorted(set(topic.title_terms))
    q_idf = idf(index, [index.n_t(t) for t in distinct])
    pre = np.array([len(topic.title_terms), q_idf.mean(), q_idf.max(), q_idf.sum()])
    return QueryFeatures(topic.topic_id, np.concatenate([aggregate(per_doc), pre]))


@dataclass(frozen=True)
class CandidateLabels:
    topic_id: str
    eff: Mapping[str, float]


def label_candidates(grid, candidates: Sequence, topic_id: str) -> CandidateLabels:
    """Copy each candidate's grid cell for ``topic_id``; missing cells raise."""
    eff = {}
    for c in candidates:
        key = c if isinstance(c, str) else c.thread_id
        eff[key] = grid.value(key, topic_id)
    return CandidateLabels(topic_id, eff)


class Scaler:
    """Column standardisation fitted on a training fold; constant columns pass through."""

    def __init__(self, mean: np.ndarray, scale: np.ndarray):
        self.mean = np.asarray(mean, dtype=np.float64)
        self.scale = np.asarray(scale, dtype=np.float64)

    @classmethod
    def fit(cls, X: np.ndarray) -> "Scaler":
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        sd = X.std(axis=0)
        return cls(X.mean(axis=0), np.where(sd > 0, sd, 1.0))

    @classmethod
    def identity(cls, dim: int) -> "Scaler":
        return cls(np.zeros(dim), np.ones(dim))

    def transform(self, X: np.ndarray) -> np.ndarray:
        return (np.asarray(X, dtype=np.float64) - self.mean) / self.scale


def write_features(path: str | Path, feats: Sequence[QueryFeatures]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("topic_id\t" + "\t".join(FEATURE_NAMES) + "\n")
        for f in feats:
            fh.write(f.topic_id + "\t" + "\t".join(repr(float(v)) for v in f.vector) + "\n")


def read_features(path: str | Path) -> list[QueryFeatures]:
    out = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n").split("\t")
        if header[1:] != list(FEATURE_NAMES):
            raise FormatError("feature header does not match this feature layout", path, 1)
        for lineno, line in enumerate(fh, 2):
            f = line.rstrip("\n").split("\t")
            if len(f) != DIM + 1:
                raise FormatError(f"expected {DIM + 1} fields, got {len(f)}", path, lineno)
            vec = np.array([float(v) for v in f[1:]])
            out.append(QueryFeatures(f[0], vec, empty=not vec.any()))
    return out


def write_labels(path: str | Path, labels: Sequence[CandidateLabels]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("topic_id\tthread_id\tvalue\n")
        for lab in labels:
            for th, v in lab.eff.items():
                fh.write(f"{lab.topic_id}\t{th}\t{float(v)!r}\n")


def read_labels(path: str | Path) -> list[CandidateLabels]:
    rows: dict[str, dict[str, float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            f = line.rstrip("\n").split("\t")
            if lineno == 1 and f[0] == "topic_id":
                continue
            if len(f) != 3:
                raise FormatError(f"expected 3 fields, got {len(f)}", path, lineno)
            rows.setdefault(f[0], {})[f[1]] = float(f[2])
    return [CandidateLabels(t, eff) for t, eff in rows.items()]
