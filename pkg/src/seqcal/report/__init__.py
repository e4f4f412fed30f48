"""Metrics, replicate aggregation and plot-script emission."""

from seqcal.report.metrics import (
    BestBatch,
    SummaryRow,
    aggregate_series,
    best_batch_sizes,
    computing_hours,
    delta_series,
    idle_time,
    mad_series,
    makespan,
    recorded_mad_series,
    speedup,
    stage_emulators,
    summarize,
    wallclock_error_curve,
    wallclock_series,
)
from seqcal.report.plotting import render_plot_script, write_plot_script

__all__ = [
    "BestBatch",
    "SummaryRow",
    "aggregate_series",
    "best_batch_sizes",
    "computing_hours",
    "delta_series",
    "idle_time",
    "mad_series",
    "makespan",
    "recorded_mad_series",
    "render_plot_script",
    "speedup",
    "stage_emulators",
    "summarize",
    "wallclock_error_curve",
    "wallclock_series",
    "write_plot_script",
]
