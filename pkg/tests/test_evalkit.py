import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from conftest import qrels_of
from sqp.corpus import Qrels
from sqp.errors import SQPError
from sqp.evalkit import (average_precision, bonferroni_significant, evaluate_run, make_folds,
                         metric, ndcg_at_10, paired_t_test, precision_at_10, summarize,
                         write_metrics)
from sqp.retrieval import ScoredList

# two-tailed critical values from a printed Student t table: (t, df, p)
T_TABLE = [(2.262, 9, 0.05), (2.776, 4, 0.05), (3.169, 10, 0.01), (1.812, 10, 0.10), (2.045, 29, 0.05)]


def differences_with_t(t: float, df: int) -> np.ndarray:
    """n = df + 1 differences whose paired t statistic is exactly ``t``."""
    n = df + 1
    z = np.linspace(-1.0, 1.0, n)
    z = (z - z.mean()) / z.std(ddof=1)
    return z + t / math.sqrt(n)


class TestMetrics:
    def test_ap_perfect(self):
        q = qrels_of(t={"a": 1, "b": 1})
        assert average_precision(["a", "b", "c"], q, "t") == 1.0

    def test_ap_rank_two(self):
        assert average_precision(["x", "a"], qrels_of(t={"a": 1}), "t") == 0.5

    def test_ap_fixture(self):
        ranking = [f"d{i}" for i in range(1, 11)]
        q = qrels_of(t={"d2": 1, "d5": 1, "d9": 1})
        assert average_precision(ranking, q, "t") == pytest.approx((1 / 3) * (1 / 2 + 2 / 5 + 3 / 9))

    def test_ap_counts_unretrieved_relevant(self):
        q = qrels_of(t={"a": 1, "z": 1})
        assert average_precision(["a"], q, "t") == 0.5

    def test_p10(self):
        ten = [f"d{i}" for i in range(10)]
        assert precision_at_10(ten, qrels_of(t={d: 1 for d in ten}), "t") == 1.0
        assert precision_at_10([], qrels_of(t={"d1": 1}), "t") == 0.0
        assert precision_at_10(["d1"], qrels_of(t={"d1": 1}), "t") == 0.1

    def test_ndcg(self):
        q = qrels_of(t={"a": 2, "b": 1})
        assert ndcg_at_10(["a", "b"], q, "t") == pytest.approx(1.0)
        assert ndcg_at_10(["a", "b"], qrels_of(t={"a": 0}), "t") == 0.0
        graded = qrels_of(t={"r1": 2, "r2": 0, "r3": 1})
        assert ndcg_at_10(["r1", "r2", "r3"], graded, "t") == pytest.approx(
            (2 + 1 / 2) / (2 + 1 / math.log2(3)))

    def test_topic_without_judgments(self):
        for m in ("AP", "P@10", "nDCG@10"):
            assert metric(m)(["a"], Qrels(), "t") == 0.0

    def test_accepts_scored_list_and_none(self):
        q = qrels_of(t={"b": 1})
        run = ScoredList("t", ("a", "b"), np.array([2.0, 1.0]))
        assert average_precision(run, q, "t") == 0.5
        assert average_precision(None, q, "t") == 0.0

    def test_unknown_metric(self):
        with pytest.raises(SQPError):
            metric("MRR")

    def test_evaluate_and_write(self, tmp_path):
        q = qrels_of(t={"b": 1})
        values = evaluate_run({"t": ["a", "b"]}, q, ["t", "u"])
        assert values["AP"] == {"t": 0.5, "u": 0.0}
        write_metrics(tmp_path / "m.tsv", values)
        lines = (tmp_path / "m.tsv").read_text().splitlines()
        assert lines[0] == "topic_id\tmetric\tvalue" and "t\tAP\t0.5" in lines


instances = st.integers(1, 20).flatmap(lambda n: st.tuples(
    st.permutations([f"d{i}" for i in range(n)]),
    st.dictionaries(st.sampled_from([f"d{i}" for i in range(25)]), st.integers(0, 3), max_size=5),
))


@settings(max_examples=200)
@given(instances)
def test_metrics_equal_definitions(inst):
    ranking, grades = inst
    q = qrels_of(t=grades)
    assert average_precision(ranking, q, "t") == oracles.ap(ranking, grades)
    assert precision_at_10(ranking, q, "t") == oracles.p_at_10(ranking, grades)
    assert ndcg_at_10(ranking, q, "t") == pytest.approx(oracles.ndcg_at_10(ranking, grades), abs=1e-15)


@given(instances, st.sampled_from([lambda s: 3 * s + 1, np.exp, lambda s: s ** 3]))
def test_metrics_rank_based(inst, transform):
    ranking, grades = inst
    q = qrels_of(t=grades)
    scores = np.linspace(1.0, 0.1, len(ranking))
    a = ScoredList("t", tuple(ranking), scores)
    b = ScoredList("t", tuple(ranking), transform(scores))
    for m in ("AP", "P@10", "nDCG@10"):
        assert metric(m)(a, q, "t") == metric(m)(b, q, "t")


def test_metrics_match_trec_eval_fixture():
    pytrec_eval = pytest.importorskip("pytrec_eval")
    rng = np.random.default_rng(11)
    qrels, run, ours = {}, {}, {}
    for t in range(8):
        tid = str(300 + t)
        docs = [f"D{j:03d}" for j in rng.permutation(60)[:40]]
        grades = {f"D{j:03d}": int(rng.integers(1, 3)) for j in rng.choice(60, 6, replace=False)}
        grades.update({f"D{j:03d}": 0 for j in rng.choice(60, 5, replace=False) if f"D{j:03d}" not in grades})
        qrels[tid] = grades
        run[tid] = {d: float(40 - k) for k, d in enumerate(docs)}
        ours[tid] = docs
    ev = pytrec_eval.RelevanceEvaluator(qrels, {"map", "P", "ndcg_cut"})
    ref = ev.evaluate(run)
    q = Qrels({(t, d): g for t, gr in qrels.items() for d, g in gr.items()})
    for tid in qrels:
        assert abs(average_precision(ours[tid], q, tid) - ref[tid]["map"]) <= 1e-4
        assert abs(precision_at_10(ours[tid], q, tid) - ref[tid]["P_10"]) <= 1e-4
        assert abs(ndcg_at_10(ours[tid], q, tid) - ref[tid]["ndcg_cut_10"]) <= 1e-4


class TestFolds:
    def test_four_topics(self):
        plan = make_folds(["a", "b", "c", "d"], trials=3, seed=42)
        for a, abar in plan.assignment:
            assert len(a) == 2 and len(abar) == 2
            assert set(a) | set(abar) == {"a", "b", "c", "d"} and not set(a) & set(abar)

    def test_same_seed_same_plan(self):
        ids = [str(i) for i in range(30)]
        assert make_folds(ids, 3, 42) == make_folds(ids, 3, 42)
        assert make_folds(ids, 3, 42) != make_folds(ids, 3, 43)

    def test_odd_count(self):
        plan = make_folds(list("abcde"))
        assert all((len(a), len(b)) == (3, 2) for a, b in plan.assignment)

    def test_too_few_topics(self):
        with pytest.raises(SQPError):
            make_folds(["a"])

    def test_fold_iteration_swaps_roles(self):
        plan = make_folds(list("abcdef"), trials=2)
        folds = list(plan.folds())
        assert [(t, f) for t, f, _, _ in folds] == [(0, 0), (0, 1), (1, 0), (1, 1)]
        assert folds[0][2] == folds[1][3] and folds[0][3] == folds[1][2]

    @given(st.lists(st.text(min_size=1, max_size=4), min_size=2, max_size=40, unique=True),
           st.integers(1, 4), st.integers(0, 2**32))
    def test_partition_invariants(self, ids, trials, seed):
        plan = make_folds(ids, trials, seed)
        assert len(plan.assignment) == trials
        for a, abar in plan.assignment:
            assert sorted(a + abar) == sorted(ids)
            assert abs(len(a) - len(abar)) <= 1


class TestStatistics:
    def test_equal_samples(self):
        assert paired_t_test([0.1, 0.2, 0.3], [0.1, 0.2, 0.3]) == 1.0

    def test_constant_nonzero_difference(self):
        assert paired_t_test([2.0, 3.0, 4.0], [1.0, 2.0, 3.0]) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(SQPError):
            paired_t_test([1.0, 2.0], [1.0])

    @pytest.mark.parametrize("t,df,p", T_TABLE)
    def test_t_table(self, t, df, p):
        d = differences_with_t(t, df)
        assert abs(paired_t_test(d, np.zeros_like(d)) - p) <= 1e-3

    @given(st.lists(st.tuples(st.floats(0, 1), st.floats(0, 1)), min_size=2, max_size=30))
    def test_symmetry(self, pairs):
        a, b = zip(*pairs)
        assert paired_t_test(a, b) == pytest.approx(paired_t_test(b, a), abs=1e-12)

    def test_bonferroni(self):
        assert bonferroni_significant(0.024, 2)
        assert not bonferroni_significant(0.025, 2)
        assert not bonferroni_significant(0.04, 2)

    def test_summarize(self):
        s = summarize([0.3] * 6)
        assert s.mean == pytest.approx(0.3) and s.std == 0.0 and s.n == 6
        s = summarize([0, 0, 0, 1, 1, 1])
        assert s.mean == 0.5 and s.std == pytest.approx(0.5477225575051661)
        with pytest.raises(SQPError):
            summarize([1.0] * 5)
