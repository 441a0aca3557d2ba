"""Batch experiments: lever sweeps and result files."""

from .output import OutputWriter, emit_outputs
from .sweep import ResultRow, ResultTable, SweepSpec, run_point, run_sweep, summarize_run

__all__ = [
    "OutputWriter",
    "ResultRow",
    "ResultTable",
    "SweepSpec",
    "emit_outputs",
    "run_point",
    "run_sweep",
    "summarize_run",
]
