"""Phase timers for the Gen / Train / RT efficiency accounting."""

from __future__ import annotations

import threading
import time
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from ..errors import TimingError

PHASES = ("Gen", "Train", "RT")

_active = threading.local()


@contextmanager
def phase_timer(phase: str, audit: "AuditLog | None" = None, label: str = ""):
    """Context manager yielding a one-element list filled with elapsed ms on exit."""
    if phase not in PHASES:
        raise TimingError(f"unknown phase {phase!r}")
    if getattr(_active, "phase", None) is not None:
        raise TimingError(f"nested timer: {phase} started inside {_active.phase}")
    _active.phase = phase
    _active.steps = []
    box = [0.0]
    start = time.perf_counter_ns()
    try:
        yield box
    finally:
        box[0] = (time.perf_counter_ns() - start) / 1e6
        steps = tuple(_active.steps)
        _active.phase = None
        _active.steps = []
        if audit is not None:
            audit.record(phase, label, box[0], steps)


def step(name: str) -> None:
    """Note a named unit of work inside the running timer (for the audit log)."""
    if getattr(_active, "phase", None) is not None:
        _active.steps.append(name)


def timed(phase: str, work, *args, audit: "AuditLog | None" = None, label: str = "", **kwargs):
    """Run ``work(*args, **kwargs)`` under one phase timer; returns (result, elapsed ms)."""
    with phase_timer(phase, audit, label) as box:
        result = work(*args, **kwargs)
    return result, box[0]


@dataclass
class AuditLog:
    """Every timed unit of work, in order: (phase, label, ms, steps)."""

    entries: list[tuple[str, str, float, tuple[str, ...]]] = field(default_factory=list)

    def record(self, phase: str, label: str, ms: float, steps: tuple[str, ...] = ()) -> None:
        self.entries.append((phase, label, ms, steps))

    def select(self, phase: str, prefix: str = ""):
        return [e for e in self.entries if e[0] == phase and e[1].startswith(prefix)]

    def write(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("phase\tlabel\tms\tsteps\n")
            for ph, lab, ms, steps in self.entries:
                fh.write(f"{ph}\t{lab}\t{ms:.6f}\t{'+'.join(steps)}\n")


@dataclass(frozen=True)
class PhaseTiming:
    phase: str
    per_query_ms: tuple[float, ...]

    @property
    def mean(self) -> float:
        return float(np.mean(self.per_query_ms)) if self.per_query_ms else 0.0

    @property
    def std(self) -> float:
        return float(np.std(self.per_query_ms, ddof=1)) if len(self.per_query_ms) > 1 else 0.0

    @property
    def total(self) -> float:
        return float(sum(self.per_query_ms))
