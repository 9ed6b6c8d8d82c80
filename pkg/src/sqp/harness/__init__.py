"""Experiment orchestration: configuration, phase timing, the fold loop and the report."""

from .config import ExperimentConfig
from .experiment import ExperimentResult, run_experiment
from .report import ReportTable, build_table, render_report, table_from_directory
from .timing import AuditLog, PhaseTiming, phase_timer, timed

__all__ = ["ExperimentConfig", "ExperimentResult", "run_experiment", "ReportTable", "build_table",
           "render_report", "table_from_directory", "AuditLog", "PhaseTiming", "phase_timer", "timed"]
