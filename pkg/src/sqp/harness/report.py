"""Result table: effectiveness and per-query cost, mean [std] over trial/fold measurements."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..errors import FormatError
from ..evalkit import MEASURES, SummaryStat, bonferroni_significant, paired_t_test, summarize
from .timing import PHASES

EFFECTIVENESS = tuple(MEASURES)
COLUMNS = EFFECTIVENESS + PHASES
METHOD_ORDER = ("BM25", "L2R-D", "Best trained", "CombSum", "ERisk-SQE", "ERisk-SQP", "Best-SQE")
MARK_L2R = "△"
MARK_BEST = "↑"
BASELINE_MARKS = (("L2R-D", MARK_L2R), ("Best trained", MARK_BEST))

PerTopicRow = tuple[int, int, str, str, str, float]  # trial, fold, method, topic, measure, value
TimingRow = tuple[int, int, str, str, float]  # trial, fold, method, phase, per-query ms


@dataclass
class ReportTable:
    methods: list[str]
    cells: dict[tuple[str, str], SummaryStat | None] = field(default_factory=dict)
    marks: dict[tuple[str, str], str] = field(default_factory=dict)
    pvalues: dict[tuple[str, str, str], float] = field(default_factory=dict)

    def cell(self, method: str, column: str) -> SummaryStat | None:
        return self.cells.get((method, column))

    def mark(self, method: str, column: str) -> str:
        return self.marks.get((method, column), "")

    def effectiveness_cells(self) -> dict[tuple[str, str], tuple[float, float]]:
        """The deterministic part of the table (timing cells excluded)."""
        return {(m, c): (s.mean, s.std) for (m, c), s in self.cells.items()
                if c in EFFECTIVENESS and s is not None}


def _fold_means(rows: Iterable[PerTopicRow]) -> dict[tuple[str, str], dict[tuple[int, int], list[float]]]:
    out: dict = defaultdict(lambda: defaultdict(list))
    for trial, fold, method, _topic, measure, value in rows:
        out[(method, measure)][(trial, fold)].append(value)
    return out


def _paired_by_trial(rows: Sequence[PerTopicRow], a: str, b: str,
                     measure: str) -> dict[int, tuple[np.ndarray, np.ndarray]]:
    """Per trial, the (a, b) per-topic values pooled over that trial's test folds."""
    va, vb = defaultdict(dict), defaultdict(dict)
    for trial, fold, method, topic, m, value in rows:
        if m != measure:
            continue
        if method == a:
            va[trial][(fold, topic)] = value
        elif method == b:
            vb[trial][(fold, topic)] = value
    out = {}
    for trial in sorted(set(va) & set(vb)):
        keys = sorted(set(va[trial]) & set(vb[trial]))
        out[trial] = (np.array([va[trial][k] for k in keys]), np.array([vb[trial][k] for k in keys]))
    return out


def build_table(per_topic: Sequence[PerTopicRow], timings: Sequence[TimingRow],
                methods: Sequence[str] | None = None) -> ReportTable:
    """Aggregate per-topic values and per-fold timings into table cells.

    An effectiveness cell is the mean [std] over (trial, fold) of the per-fold
    mean across test topics. Marks compare each method against the two learned
    baselines: within each trial, a paired t-test over the per-topic values of
    both test folds, at a Bonferroni-corrected level of 0.05/2. A mark needs
    every trial to be significant with a higher mean; ``pvalues`` keeps the
    largest per-trial p.
    """
    per_topic = list(per_topic)
    if methods is None:
        seen = {r[2] for r in per_topic} | {r[2] for r in timings}
        methods = [m for m in METHOD_ORDER if m in seen] + sorted(seen - set(METHOD_ORDER))
    table = ReportTable(list(methods))
    folds = _fold_means(per_topic)
    for method in methods:
        for measure in EFFECTIVENESS:
            by_fold = folds.get((method, measure))
            if by_fold:
                values = [float(np.mean(by_fold[k])) for k in sorted(by_fold)]
                table.cells[(method, measure)] = summarize(values, expected=None)
            else:
                table.cells[(method, measure)] = None
    timing_cells: dict = defaultdict(dict)
    for trial, fold, method, phase, ms in timings:
        timing_cells[(method, phase)][(trial, fold)] = ms
    for method in methods:
        for phase in PHASES:
            vals = timing_cells.get((method, phase))
            table.cells[(method, phase)] = (summarize([vals[k] for k in sorted(vals)], expected=None)
                                            if vals else None)

    n_comparisons = len(BASELINE_MARKS)
    for method in methods:
        for measure in EFFECTIVENESS:
            marks = ""
            for baseline, symbol in BASELINE_MARKS:
                if method == baseline or baseline not in methods:
                    continue
                trials = _paired_by_trial(per_topic, method, baseline, measure)
                if not trials or any(len(x) < 2 for x, _ in trials.values()):
                    continue
                pvals = [paired_t_test(x, y) for x, y in trials.values()]
                table.pvalues[(method, baseline, measure)] = max(pvals)
                if all(bonferroni_significant(p, n_comparisons) and x.mean() > y.mean()
                       for p, (x, y) in zip(pvals, trials.values())):
                    marks += symbol
            if marks:
                table.marks[(method, measure)] = marks
    return table


# --- rendering ---------------------------------------------------------------

def _fmt(stat: SummaryStat | None, column: str) -> str:
    if stat is None:
        return "-"
    digits = 4 if column in EFFECTIVENESS else 2
    return f"{stat.mean:.{digits}f} [{stat.std:.{digits}f}]"


def render_report(table: ReportTable, format: str = "text") -> str:
    if format == "tsv":
        lines = ["method\tcolumn\tmean\tstd\tn\tmark"]
        for m in table.methods:
            for c in COLUMNS:
                s = table.cell(m, c)
                if s is None:
                    lines.append(f"{m}\t{c}\t-\t-\t0\t")
                else:
                    lines.append(f"{m}\t{c}\t{s.mean!r}\t{s.std!r}\t{s.n}\t{table.mark(m, c)}")
        return "\n".join(lines) + "\n"
    if format != "text":
        raise ValueError(f"unknown report format {format!r}")
    rows = [["Method", *COLUMNS]]
    for m in table.methods:
        rows.append([m] + [_fmt(table.cell(m, c), c) + table.mark(m, c) for c in COLUMNS])
    widths = [max(len(r[i]) for r in rows) for i in range(len(rows[0]))]
    out = []
    for k, r in enumerate(rows):
        out.append("  ".join(v.ljust(w) if i == 0 else v.rjust(w)
                             for i, (v, w) in enumerate(zip(r, widths))).rstrip())
        if k == 0:
            out.append("-" * len(out[0]))
    out.append("")
    out.append(f"Effectiveness: mean [std] over trial/fold measurements; time columns in ms per query. "
               f"{MARK_L2R} vs L2R-D, {MARK_BEST} vs Best trained: paired t-test, p < 0.05/2.")
    return "\n".join(out) + "\n"


def read_report_tsv(path: str | Path) -> ReportTable:
    return parse_report_tsv(Path(path).read_text(encoding="utf-8"))


def parse_report_tsv(text: str) -> ReportTable:
    lines = text.splitlines()
    if not lines or lines[0] != "method\tcolumn\tmean\tstd\tn\tmark":
        raise FormatError("not a report TSV (bad header)")
    table = ReportTable([])
    for no, line in enumerate(lines[1:], start=2):
        parts = line.split("\t")
        if len(parts) != 6:
            raise FormatError(f"expected 6 fields, got {len(parts)}", line=no)
        m, c, mean, std, n, mark = parts
        if m not in table.methods:
            table.methods.append(m)
        table.cells[(m, c)] = None if mean == "-" else SummaryStat(float(mean), float(std), int(n))
        if mark:
            table.marks[(m, c)] = mark
    return table


# --- persisted rows ----------------------------------------------------------

def write_per_topic(path: str | Path, rows: Iterable[PerTopicRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("trial\tfold\tmethod\ttopic_id\tmeasure\tvalue\n")
        for trial, fold, method, topic, measure, value in rows:
            fh.write(f"{trial}\t{fold}\t{method}\t{topic}\t{measure}\t{value!r}\n")


def read_per_topic(path: str | Path) -> list[PerTopicRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "trial\tfold\tmethod\ttopic_id\tmeasure\tvalue":
            raise FormatError("bad per-topic header", path=path, line=1)
        for no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 6:
                raise FormatError(f"expected 6 fields, got {len(parts)}", path=path, line=no)
            rows.append((int(parts[0]), int(parts[1]), parts[2], parts[3], parts[4], float(parts[5])))
    return rows


def write_timings(path: str | Path, rows: Iterable[TimingRow]) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("trial\tfold\tmethod\tphase\tms_per_query\n")
        for trial, fold, method, phase, ms in rows:
            fh.write(f"{trial}\t{fold}\t{method}\t{phase}\t{ms!r}\n")


def read_timings(path: str | Path) -> list[TimingRow]:
    rows = []
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().rstrip("\n")
        if header != "trial\tfold\tmethod\tphase\tms_per_query":
            raise FormatError("bad timings header", path=path, line=1)
        for no, line in enumerate(fh, start=2):
            parts = line.rstrip("\n").split("\t")
            if len(parts) != 5:
                raise FormatError(f"expected 5 fields, got {len(parts)}", path=path, line=no)
            rows.append((int(parts[0]), int(parts[1]), parts[2], parts[3], float(parts[4])))
    return rows


def table_from_directory(directory: str | Path, methods: Sequence[str] | None = None) -> ReportTable:
    """Rebuild the table from an experiment's ``per_topic.tsv`` and ``timings.tsv``."""
    d = Path(directory)
    return build_table(read_per_topic(d / "per_topic.tsv"), read_timings(d / "timings.tsv"), methods)
