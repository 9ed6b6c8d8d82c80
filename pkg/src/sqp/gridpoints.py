"""Processing threads (W, Q, D, T), their batch execution and the grid of points."""

from __future__ import annotations

import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from itertools import product
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from . import evalkit
from .corpus import InvertedIndex, Qrels, Topic
from .errors import FormatError, GridError, SQPError
from .expansion import EXPANSION_IDS, ExpansionModel, expand, expansion_weights
from .retrieval import (DEFAULT_DEPTH, MODEL_IDS, ScoredList, WeightedQuery, WeightingModel,
                        score, write_run)

log = logging.getLogger(__name__)

DESK_W = MODEL_IDS
DESK_Q = ("None", "Bo1", "Bo2", "KL")
DESK_D = (0, 5, 10, 20)
DESK_T = (0, 5, 10)

# The full Table-1 style value sets, restricted to the implemented models.
FULL_D = (0, 2, 5, 10, 20, 50, 100)
FULL_T = (0, 2, 5, 10, 15, 20)


@dataclass(frozen=True)
class ProcessingThread:
    W: WeightingModel
    Q: ExpansionModel = field(default_factory=ExpansionModel)
    D: int = 0
    T: int = 0

    def __post_init__(self):
        if self.Q.expands:
            if self.D <= 0 or self.T <= 0:
                raise SQPError(f"expanding thread needs D > 0 and T > 0, got D={self.D} T={self.T}")
        elif self.D != 0 or self.T != 0:
            raise SQPError("unexpanded thread must have D = T = 0")

    @property
    def thread_id(self) -> str:
        return f"{self.W.model_id}/{self.Q.model_id}/{self.D}/{self.T}"

    @property
    def expanded(self) -> bool:
        return self.Q.expands

    def sort_key(self) -> tuple:
        return (MODEL_IDS.index(self.W.model_id), EXPANSION_IDS.index(self.Q.model_id), self.D, self.T)

    def unexpanded(self) -> "ProcessingThread":
        return ProcessingThread(self.W)

    def __str__(self) -> str:
        return self.thread_id

    @classmethod
    def parse(cls, thread_id: str, params: Mapping[str, Mapping[str, float]] | None = None,
              beta: float | None = None) -> "ProcessingThread":
        try:
            w, q, d, t = thread_id.split("/")
            D, T = int(d), int(t)
        except ValueError:
            raise SQPError(f"malformed thread id {thread_id!r} (want W/Q/D/T)") from None
        model = WeightingModel.create(w, **dict((params or {}).get(w, {})))
        exp = ExpansionModel(q) if beta is None else ExpansionModel(q, beta)
        return cls(model, exp, D, T)


def canonical(threads: Iterable[ProcessingThread]) -> list[ProcessingThread]:
    return sorted(threads, key=ProcessingThread.sort_key)


def enumerate_threads(W_set: Sequence[str | WeightingModel], Q_set: Sequence[str],
                      D_set: Sequence[int], T_set: Sequence[int],
                      beta: float = 0.4) -> list[ProcessingThread]:
    """One unexpanded thread per W plus W x (Q != None) x (D > 0) x (T > 0)."""
    if not W_set:
        raise SQPError("empty weighting-model set")
    if not Q_set or not D_set or not T_set:
        raise SQPError("Q, D and T sets must be nonempty")
    has_none = "None" in Q_set
    if (0 in D_set) != has_none or (0 in T_set) != has_none:
        raise SQPError("0 must be in D and T exactly when None is in Q")
    models = [w if isinstance(w, WeightingModel) else WeightingModel(w) for w in W_set]
    exps = [ExpansionModel(q, beta) for q in dict.fromkeys(Q_set) if q != "None"]
    Ds = sorted({d for d in D_set if d > 0})
    Ts = sorted({t for t in T_set if t > 0})
    threads = {}
    for w in models:
        th = ProcessingThread(w)
        threads[th.thread_id] = th
        for q, d, t in product(exps, Ds, Ts):
            th = ProcessingThread(w, q, d, t)
            threads[th.thread_id] = th
    return canonical(threads.values())


def thread_count(nW: int, nQ: int, nD: int, nT: int) -> int:
    """|W| + |W|.|Q!=None|.|D>0|.|T>0|."""
    return nW + nW * nQ * nD * nT


def desk_threads(beta: float = 0.4, params=None) -> list[ProcessingThread]:
    """8 W x 3 expanding Q x D{5,10,20} x T{5,10} + 8 unexpanded = 152 threads."""
    models = [WeightingModel.create(w, **dict((params or {}).get(w, {}))) for w in DESK_W]
    return enumerate_threads(models, DESK_Q, DESK_D, DESK_T, beta)


def run_query(index: InvertedIndex, query: WeightedQuery, thread: ProcessingThread,
              depth: int = DEFAULT_DEPTH) -> ScoredList:
    """First pass with W; if Q expands: feedback weights, merge, second pass with W."""
    first = score(index, query, thread.W, depth)
    if not thread.expanded or len(first) == 0:
        return first
    weights = expansion_weights(index, first, thread.D, thread.Q, top=thread.T)
    expanded = expand(query, weights, thread.T, thread.Q.beta)
    if expanded is query:
        return first
    return score(index, expanded, thread.W, depth)


def run_thread(index: InvertedIndex, topics: Iterable[Topic], thread: ProcessingThread,
               depth: int = DEFAULT_DEPTH) -> dict[str, ScoredList]:
    return {t.topic_id: run_query(index, WeightedQuery.from_topic(t), thread, depth) for t in topics}


@dataclass
class GenTiming:
    wall_ms: float
    cpu_ms: np.ndarray  # per (thread, query)


def run_threads(index: InvertedIndex, topics: Sequence[Topic], threads: Sequence[ProcessingThread],
                depth: int = DEFAULT_DEPTH, parallelism: int = 1
                ) -> tuple[dict[str, dict[str, ScoredList]], GenTiming]:
    """Run every (thread, topic) cell; results are keyed, then assembled canonically."""
    queries = [WeightedQuery.from_topic(t) for t in topics]
    cells = [(i, j) for i in range(len(threads)) for j in range(len(queries))]
    cpu = np.zeros((len(threads), len(queries)))

    def work(cell):
        i, j = cell
        t0 = time.thread_time_ns()
        run = run_query(index, queries[j], threads[i], depth)
        return cell, run, (time.thread_time_ns() - t0) / 1e6

    start = time.perf_counter_ns()
    if parallelism > 1:
        with ThreadPoolExecutor(max_workers=parallelism) as pool:
            results = list(pool.map(work, cells, chunksize=max(1, len(cells) // (4 * parallelism))))
    else:
        results = [work(c) for c in cells]
    wall = (time.perf_counter_ns() - start) / 1e6

    keyed = {}
    for (i, j), run, ms in results:
        keyed[(i, j)] = run
        cpu[i, j] = ms
    runs = {th.thread_id: {q.topic_id: keyed[(i, j)] for j, q in enumerate(queries)}
            for i, th in enumerate(threads)}
    return runs, GenTiming(wall, cpu)


class GridOfPoints:
    """Effectiveness matrix, rows = threads (canonical order), columns = queries."""

    def __init__(self, threads: Sequence[ProcessingThread], queries: Sequence[str],
                 eff, measure: str):
        order = sorted(range(len(threads)), key=lambda i: threads[i].sort_key())
        eff = np.asarray(eff, dtype=np.float64)
        if eff.shape != (len(threads), len(queries)):
            raise SQPError(f"grid shape {eff.shape} != ({len(threads)}, {len(queries)})")
        if eff.size and (np.isnan(eff).any() or eff.min() < 0 or eff.max() > 1):
            raise SQPError("grid values must lie in [0, 1]")
        self.threads: tuple[ProcessingThread, ...] = tuple(threads[i] for i in order)
        self.queries: tuple[str, ...] = tuple(queries)
        self.eff = eff[order]
        self.eff.setflags(write=False)
        self.measure = measure
        self._row = {th.thread_id: i for i, th in enumerate(self.threads)}
        self._col = {q: j for j, q in enumerate(self.queries)}
        if len(self._row) != len(self.threads):
            raise SQPError("duplicate thread in grid")

    def __len__(self) -> int:
        return len(self.threads)

    def row_of(self, thread: ProcessingThread | str) -> int:
        key = thread if isinstance(thread, str) else thread.thread_id
        try:
            return self._row[key]
        except KeyError:
            raise GridError(f"thread {key} not in grid") from None

    def col_of(self, topic_id: str) -> int:
        try:
            return self._col[topic_id]
        except KeyError:
            raise GridError(f"topic {topic_id} not in grid") from None

    def __contains__(self, thread) -> bool:
        key = thread if isinstance(thread, str) else thread.thread_id
        return key in self._row

    def thread(self, thread_id: str) -> ProcessingThread:
        return self.threads[self.row_of(thread_id)]

    def row(self, thread) -> np.ndarray:
        return self.eff[self.row_of(thread)]

    def value(self, thread, topic_id: str) -> float:
        return float(self.eff[self.row_of(thread), self.col_of(topic_id)])

    def restrict(self, topic_ids: Sequence[str]) -> "GridOfPoints":
        cols = [self.col_of(q) for q in topic_ids]
        return GridOfPoints(self.threads, list(topic_ids), self.eff[:, cols], self.measure)

    def write_tsv(self, path: str | Path, append: bool = False) -> None:
        with open(path, "a" if append else "w", encoding="utf-8") as fh:
            if not append:
                fh.write("thread_id\ttopic_id\tmeasure\tvalue\n")
            for i, th in enumerate(self.threads):
                for j, q in enumerate(self.queries):
                    fh.write(f"{th.thread_id}\t{q}\t{self.measure}\t{float(self.eff[i, j])!r}\n")


def build_grid(runs: Mapping[str, Mapping[str, ScoredList]], threads: Sequence[ProcessingThread],
               topic_ids: Sequence[str], qrels: Qrels, measure: str = "AP") -> GridOfPoints:
    """Evaluate each thread's run per topic; topics absent from qrels score 0."""
    fn = evalkit.metric(measure)
    missing = [q for q in topic_ids if q not in qrels]
    if missing:
        log.warning("%d topic(s) absent from qrels score 0: %s", len(missing), ", ".join(missing[:10]))
    eff = np.zeros((len(threads), len(topic_ids)))
    for i, th in enumerate(threads):
        per_topic = runs[th.thread_id]
        for j, q in enumerate(topic_ids):
            run = per_topic.get(q)
            eff[i, j] = fn(run, qrels, q) if run is not None else 0.0
    return GridOfPoints(threads, topic_ids, eff, measure)


def read_grid(path: str | Path, measure: str | None = None, params=None,
              beta: float | None = None) -> GridOfPoints:
    """Load one measure's grid from the TSV format written by :meth:`GridOfPoints.write_tsv`."""
    cells: dict[str, dict[tuple[str, str], float]] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            f = line.rstrip("\n").split("\t")
            if lineno == 1 and f[0] == "thread_id":
                continue
            if f == [""]:
                continue
            if len(f) != 4:
                raise FormatError(f"expected 4 tab-separated fields, got {len(f)}", path, lineno)
            try:
                cells.setdefault(f[2], {})[(f[0], f[1])] = float(f[3])
            except ValueError:
                raise FormatError(f"bad value {f[3]!r}", path, lineno) from None
    if not cells:
        raise FormatError("empty grid file", path)
    if measure is None:
        if len(cells) > 1:
            raise SQPError(f"grid file holds several measures {sorted(cells)}; pick one")
        measure = next(iter(cells))
    if measure not in cells:
        raise SQPError(f"measure {measure} not in grid file (have {sorted(cells)})")
    data = cells[measure]
    thread_ids = list(dict.fromkeys(t for t, _ in data))
    topic_ids = list(dict.fromkeys(q for _, q in data))
    eff = np.zeros((len(thread_ids), len(topic_ids)))
    for i, t in enumerate(thread_ids):
        for j, q in enumerate(topic_ids):
            try:
                eff[i, j] = data[(t, q)]
            except KeyError:
                raise FormatError(f"grid not rectangular: missing ({t}, {q})", path) from None
    threads = [ProcessingThread.parse(t, params, beta) for t in thread_ids]
    return GridOfPoints(threads, topic_ids, eff, measure)


def run_filename(thread: ProcessingThread) -> str:
    return thread.thread_id.replace("/", "_") + ".run"


def write_runs(directory: str | Path, runs: Mapping[str, Mapping[str, ScoredList]],
               threads: Sequence[ProcessingThread], topic_ids: Sequence[str]) -> None:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for th in threads:
        write_run(d / run_filename(th), (runs[th.thread_id][q] for q in topic_ids),
                  tag=th.thread_id.replace("/", "_"))
