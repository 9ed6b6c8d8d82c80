import math
from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import make_index, topic
from sqp import _accel
from sqp.errors import FormatError, GridError
from sqp.features import (DIM, FEATURE_NAMES, Scaler, QueryFeatures, CandidateLabels,
                          document_features, extract_features, label_candidates, read_features,
                          read_labels, write_features, write_labels)
from sqp.gridpoints import GridOfPoints, ProcessingThread
from sqp.retrieval import WeightedQuery, bm25_default

THREE_DOCS = {"d1": ["a", "b", "b", "x"], "d2": ["a", "y", "y"], "d3": ["b", "b", "b", "a", "z"],
              "d4": ["q", "r"]}


def sheet_vector(docs: dict[str, list[str]], title: list[str], K: int = 20) -> np.ndarray:
    """Column-by-column recomputation of the 44-dim layout from raw token lists."""
    N = len(docs)
    tokens = sum(len(t) for t in docs.values())
    counts = {d: Counter(t) for d, t in docs.items()}
    bm25 = oracles.brute_scores(docs, dict(Counter(title)), "BM25")
    top = oracles.ranked(bm25, K)
    terms = sorted(set(title))
    n_t = {t: sum(1 for c in counts.values() if c[t]) for t in terms}
    F_t = {t: sum(c[t] for c in counts.values()) for t in terms}
    idf = {t: math.log(1 + (N - n_t[t] + 0.5) / (n_t[t] + 0.5)) for t in terms}
    rows = []
    for d in top:
        c, dl = counts[d], len(docs[d])
        here = [t for t in terms if c[t]]
        rows.append([
            bm25[d], dl,
            sum(c[t] for t in here),
            sum(math.log(1 + c[t]) for t in here),
            sum(idf[t] for t in here),
            sum(c[t] * idf[t] for t in here),
            sum(c[t] / dl for t in here),
            sum(oracles.term_weight("DirichletLM", c[t], dl, n_t[t], F_t[t], N, tokens / N, tokens,
                                    mu=2500.0) for t in here),
        ])
    vec = []
    for col in zip(*rows):
        m = math.fsum(col) / len(col)
        vec += [min(col), max(col), m, math.sqrt(sum((v - m) ** 2 for v in col) / len(col)),
                math.fsum(col)]
    q_idf = [math.log(1 + (N - n + 0.5) / (n + 0.5)) for n in (n_t[t] for t in terms)]
    vec += [len(title), sum(q_idf) / len(q_idf), max(q_idf), sum(q_idf)]
    return np.array(vec)


class TestExtract:
    def test_layout(self):
        assert DIM == 44 and len(FEATURE_NAMES) == 44
        assert FEATURE_NAMES[:5] == ("bm25_min", "bm25_max", "bm25_mean", "bm25_std", "bm25_sum")
        assert FEATURE_NAMES[-4:] == ("query_len", "mean_idf", "max_idf", "sum_idf")

    def test_empty_result_is_zero_vector(self, tiny_index):
        f = extract_features(tiny_index, topic("1", "nothing"))
        assert f.empty and f.vector.shape == (DIM,) and not f.vector.any()

    def test_single_document(self, tiny_index):
        f = extract_features(tiny_index, topic("1", "c"))
        agg = f.vector[:40].reshape(8, 5)
        assert (agg[:, 0] == agg[:, 1]).all() and (agg[:, 1] == agg[:, 2]).all()
        assert (agg[:, 2] == agg[:, 4]).all() and (agg[:, 3] == 0).all()

    def test_three_doc_fixture(self):
        idx = make_index(THREE_DOCS)
        f = extract_features(idx, topic("1", "a", "b"))
        np.testing.assert_allclose(f.vector, sheet_vector(THREE_DOCS, ["a", "b"]), rtol=1e-12)

    def test_repeated_title_term(self):
        idx = make_index(THREE_DOCS)
        f = extract_features(idx, topic("1", "b", "a", "b"))
        np.testing.assert_allclose(f.vector, sheet_vector(THREE_DOCS, ["b", "a", "b"]), rtol=1e-12)

    def test_K_truncates(self):
        idx = make_index(THREE_DOCS)
        f = extract_features(idx, topic("1", "a", "b"), K=2)
        np.testing.assert_allclose(f.vector, sheet_vector(THREE_DOCS, ["a", "b"], K=2), rtol=1e-12)

    def test_duplicate_topics_identical(self, ten_doc_index):
        a = extract_features(ten_doc_index, topic("1", "a", "c"))
        b = extract_features(ten_doc_index, topic("2", "a", "c"))
        assert np.array_equal(a.vector, b.vector)

    def test_kernels_agree(self, desk):
        index, topics, _ = desk
        for t in topics[:10]:
            run = bm25_default(index, WeightedQuery.from_topic(t), 50)
            docs = np.array([index.doc_index[d] for d in run.doc_ids], dtype=np.int64)
            a = document_features(index, t.title_terms, docs, run.scores, _accel.doc_features_numpy)
            b = document_features(index, t.title_terms, docs, run.scores, _accel.doc_features)
            np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-12)


corpora = st.dictionaries(st.text("abcdef", min_size=1, max_size=3),
                          st.lists(st.sampled_from(list("pqrstu")), min_size=1, max_size=12),
                          min_size=1, max_size=15)


@settings(max_examples=60, deadline=None)
@given(corpora, st.lists(st.sampled_from(list("pqrstuv")), min_size=1, max_size=4), st.integers(1, 20))
def test_feature_invariants(docs, title, K):
    idx = make_index(docs)
    f = extract_features(idx, topic("t", *title), K)
    assert f.vector.shape == (DIM,) and np.isfinite(f.vector).all()
    if f.empty:
        return
    agg = f.vector[:40].reshape(8, 5)
    eps = 1e-9 * (1 + np.abs(agg[:, 2]))
    assert (agg[:, 0] <= agg[:, 2] + eps).all() and (agg[:, 2] <= agg[:, 1] + eps).all()
    np.testing.assert_allclose(f.vector, sheet_vector(docs, title, K), rtol=1e-9, atol=1e-9)


class TestLabels:
    GRID = GridOfPoints([ProcessingThread.parse("BM25/None/0/0"), ProcessingThread.parse("PL2/None/0/0")],
                        ["1", "2"], [[0.5, 0.1], [0.3, 0.9]], "AP")

    def test_lookup(self):
        lab = label_candidates(self.GRID, ["BM25/None/0/0", ProcessingThread.parse("PL2/None/0/0")], "2")
        assert lab.eff == {"BM25/None/0/0": 0.1, "PL2/None/0/0": 0.9}

    def test_missing(self):
        with pytest.raises(GridError):
            label_candidates(self.GRID, ["BM25/None/0/0"], "7")
        with pytest.raises(GridError):
            label_candidates(self.GRID, ["DPH/None/0/0"], "1")

    def test_round_trip(self, tmp_path):
        labs = [CandidateLabels("1", {"BM25/None/0/0": 0.1 + 0.2}), CandidateLabels("2", {"PL2/None/0/0": 1 / 3})]
        write_labels(tmp_path / "l.tsv", labs)
        assert read_labels(tmp_path / "l.tsv") == labs


class TestFeatureFiles:
    def test_round_trip_exact(self, tmp_path, ten_doc_index):
        feats = [extract_features(ten_doc_index, topic(str(i), *"abcdefgh"[i:i + 2])) for i in range(6)]
        feats.append(extract_features(ten_doc_index, topic("e", "zzz")))
        write_features(tmp_path / "f.tsv", feats)
        back = read_features(tmp_path / "f.tsv")
        assert back == feats and back[-1].empty

    def test_bad_header(self, tmp_path):
        (tmp_path / "f.tsv").write_text("topic_id\tfoo\n1\t0.0\n")
        with pytest.raises(FormatError):
            read_features(tmp_path / "f.tsv")

    def test_bad_row(self, tmp_path):
        write_features(tmp_path / "f.tsv", [QueryFeatures("1", np.zeros(DIM))])
        with open(tmp_path / "f.tsv", "a") as fh:
            fh.write("2\t1.0\n")
        with pytest.raises(FormatError) as exc:
            read_features(tmp_path / "f.tsv")
        assert exc.value.line == 3


class TestScaler:
    def test_standardises_and_passes_constants(self):
        X = np.array([[1.0, 5.0], [3.0, 5.0]])
        s = Scaler.fit(X)
        np.testing.assert_array_equal(s.transform(X), [[-1.0, 0.0], [1.0, 0.0]])

    def test_identity(self):
        x = np.array([2.0, -1.0])
        assert np.array_equal(Scaler.identity(2).transform(x), x)
