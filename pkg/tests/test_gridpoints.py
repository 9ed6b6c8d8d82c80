import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import qrels_of, topic
from sqp.corpus import Qrels
from sqp.errors import FormatError, GridError, SQPError
from sqp.evalkit import average_precision
from sqp.expansion import EXPANSION_IDS, ExpansionModel, expand, expansion_weights
from sqp.gridpoints import (FULL_D, FULL_T, GridOfPoints, ProcessingThread, build_grid,
                            desk_threads, enumerate_threads, read_grid, run_filename, run_query,
                            run_thread, run_threads, thread_count, write_runs)
from sqp.retrieval import (MODEL_IDS, WeightedQuery, WeightingModel, bm25_default, read_run,
                           score)

BM25 = WeightingModel.create("BM25")


def th(tid: str) -> ProcessingThread:
    return ProcessingThread.parse(tid)


class TestThreads:
    def test_invariants(self):
        with pytest.raises(SQPError):
            ProcessingThread(BM25, ExpansionModel("Bo1"), 0, 5)
        with pytest.raises(SQPError):
            ProcessingThread(BM25, ExpansionModel("None"), 5, 0)

    def test_id_round_trip(self):
        t = ProcessingThread(WeightingModel.create("PL2"), ExpansionModel("KL"), 10, 5)
        assert t.thread_id == "PL2/KL/10/5"
        assert ProcessingThread.parse(t.thread_id) == t

    def test_malformed_id(self):
        with pytest.raises(SQPError):
            ProcessingThread.parse("BM25/Bo1/10")

    def test_small_enumeration(self):
        got = enumerate_threads(["BM25"], ["None", "Bo1"], [0, 2], [0, 5])
        assert [t.thread_id for t in got] == ["BM25/None/0/0", "BM25/Bo1/2/5"]

    def test_unexpanded_only(self):
        assert len(enumerate_threads(["BM25", "PL2"], ["None"], [0], [0])) == 2

    def test_empty_w_set(self):
        with pytest.raises(SQPError):
            enumerate_threads([], ["None"], [0], [0])

    def test_zero_none_coupling(self):
        with pytest.raises(SQPError):
            enumerate_threads(["BM25"], ["Bo1"], [0, 5], [5])

    def test_full_table_count(self):
        # 21 W, 6 expanding Q, 6 D, 5 T: counted from the enumeration rule
        assert thread_count(21, 6, 6, 5) == 3801
        grid = enumerate_threads(list(MODEL_IDS), list(EXPANSION_IDS), FULL_D, FULL_T)
        assert len(grid) == thread_count(8, 3, 6, 5)

    def test_desk_grid(self):
        threads = desk_threads()
        assert len(threads) == 152
        assert sum(not t.expanded for t in threads) == 8

    @given(st.lists(st.sampled_from(MODEL_IDS), min_size=1, unique=True),
           st.lists(st.sampled_from(["Bo1", "Bo2", "KL"]), unique=True),
           st.sets(st.integers(1, 100)), st.sets(st.integers(1, 30)))
    def test_count_formula(self, W, Q, D, T):
        if not Q or not D or not T:
            Q, D, T = [], set(), set()
        threads = enumerate_threads(W, ["None", *Q], [0, *D], [0, *T])
        assert len(threads) == thread_count(len(W), len(Q), len(D), len(T))
        assert len({t.thread_id for t in threads}) == len(threads)
        keys = [t.sort_key() for t in threads]
        assert keys == sorted(keys)


class TestRunQuery:
    def test_unexpanded_equals_bm25_default(self, ten_doc_index):
        q = WeightedQuery("q", {"a": 1.0, "c": 1.0})
        assert run_query(ten_doc_index, q, th("BM25/None/0/0")) == bm25_default(ten_doc_index, q)

    def test_expanded_equals_manual_composition(self, ten_doc_index):
        q = WeightedQuery("q", {"a": 1.0, "c": 1.0})
        first = score(ten_doc_index, q, BM25)
        weights = expansion_weights(ten_doc_index, first, 2, "Bo1")
        manual = score(ten_doc_index, expand(q, weights, 5, 0.4), BM25)
        assert run_query(ten_doc_index, q, th("BM25/Bo1/2/5")) == manual

    def test_empty_title(self, ten_doc_index):
        runs = run_thread(ten_doc_index, [topic("9")], th("PL2/KL/5/5"))
        assert len(runs["9"]) == 0

    def test_parallel_equals_serial(self, ten_doc_index):
        topics = [topic(str(i), *"abcdefgh"[i:i + 2]) for i in range(6)]
        threads = enumerate_threads(["BM25", "DPH", "InL2"], ["None", "Bo1", "KL"], [0, 2, 4], [0, 3])
        serial, _ = run_threads(ten_doc_index, topics, threads, parallelism=1)
        parallel, timing = run_threads(ten_doc_index, topics, threads, parallelism=4)
        assert serial == parallel
        assert timing.cpu_ms.shape == (len(threads), len(topics)) and (timing.cpu_ms >= 0).all()
        assert timing.wall_ms >= 0


class TestGrid:
    def test_identical_runs_identical_rows(self, ten_doc_index):
        topics = [topic("1", "a"), topic("2", "b", "c")]
        qrels = qrels_of(**{"1": {"d00": 1, "d03": 1}, "2": {"d05": 2}})
        runs, _ = run_threads(ten_doc_index, topics, [th("BM25/None/0/0")])
        runs["DPH/None/0/0"] = runs["BM25/None/0/0"]
        g = build_grid(runs, [th("BM25/None/0/0"), th("DPH/None/0/0")], ["1", "2"], qrels)
        assert np.array_equal(g.eff[0], g.eff[1])

    def test_row_equals_hand_ap(self, ten_doc_index):
        topics = [topic("1", "a"), topic("2", "b")]
        qrels = qrels_of(**{"1": {"d02": 1, "d07": 1}, "2": {"d01": 1}})
        thread = th("BM25/None/0/0")
        runs, _ = run_threads(ten_doc_index, topics, [thread])
        g = build_grid(runs, [thread], ["1", "2"], qrels)
        for q in ("1", "2"):
            assert g.value(thread, q) == average_precision(runs[thread.thread_id][q], qrels, q)

    def test_empty_run_and_missing_topic(self, ten_doc_index, caplog):
        thread = th("BM25/None/0/0")
        runs, _ = run_threads(ten_doc_index, [topic("1"), topic("2", "a")], [thread])
        g = build_grid(runs, [thread], ["1", "2"], Qrels({("1", "d00"): 1}))
        assert g.value(thread, "1") == 0.0 and g.value(thread, "2") == 0.0
        assert "absent from qrels" in caplog.text

    def test_validation_and_lookup_errors(self):
        with pytest.raises(SQPError):
            GridOfPoints([th("BM25/None/0/0")], ["1"], [[1.5]], "AP")
        g = GridOfPoints([th("BM25/None/0/0")], ["1"], [[0.5]], "AP")
        with pytest.raises(GridError):
            g.row("PL2/None/0/0")
        with pytest.raises(GridError):
            g.value("BM25/None/0/0", "7")

    def test_rows_canonical(self):
        g = GridOfPoints([th("PL2/None/0/0"), th("BM25/Bo1/5/5"), th("BM25/None/0/0")], ["1"],
                         [[0.1], [0.2], [0.3]], "AP")
        assert [t.thread_id for t in g.threads] == ["BM25/None/0/0", "BM25/Bo1/5/5", "PL2/None/0/0"]
        assert g.value("PL2/None/0/0", "1") == 0.1

    def test_tsv_round_trip(self, tmp_path):
        threads = [th("BM25/None/0/0"), th("BM25/KL/5/10")]
        rng = np.random.default_rng(0)
        ap = GridOfPoints(threads, ["3", "1"], rng.random((2, 2)), "AP")
        p10 = GridOfPoints(threads, ["3", "1"], rng.random((2, 2)), "P@10")
        ap.write_tsv(tmp_path / "g.tsv")
        p10.write_tsv(tmp_path / "g.tsv", append=True)
        back = read_grid(tmp_path / "g.tsv", "P@10")
        assert back.queries == ("3", "1") and np.array_equal(back.eff, p10.eff)
        with pytest.raises(SQPError):
            read_grid(tmp_path / "g.tsv")

    def test_tsv_malformed(self, tmp_path):
        (tmp_path / "g.tsv").write_text("thread_id\ttopic_id\tmeasure\tvalue\nBM25/None/0/0\t1\tAP\n")
        with pytest.raises(FormatError):
            read_grid(tmp_path / "g.tsv")

    def test_cells_reproduce_from_run_files(self, ten_doc_index, tmp_path):
        topics = [topic(str(i), *"abcdefgh"[i:i + 3]) for i in range(5)]
        qrels = qrels_of(**{str(i): {f"d0{i}": 1, f"d0{i + 3}": 2} for i in range(5)})
        threads = enumerate_threads(["BM25", "LGD"], ["None", "Bo2"], [0, 3], [0, 4])
        runs, _ = run_threads(ten_doc_index, topics, threads)
        ids = [t.topic_id for t in topics]
        grid = build_grid(runs, threads, ids, qrels)
        write_runs(tmp_path, runs, threads, ids)
        for t in threads:
            back = read_run(tmp_path / run_filename(t))
            for q in ids:
                assert abs(average_precision(back.get(q), qrels, q) - grid.value(t, q)) <= 1e-9
