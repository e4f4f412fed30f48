"""Monte Carlo performance model of batched sequential designs."""

from seqcal.performance.models import (
    AcqTimeModel,
    CurveConfig,
    PerfScenario,
    PerfTrace,
    ProgressCurve,
    RunTimeModel,
    acq_time,
    error_at,
    evals_to_accuracy,
    sample_runtime,
    sample_runtimes,
)
from seqcal.performance.simulator import run_scenario, simulate

__all__ = [
    "AcqTimeModel",
    "CurveConfig",
    "PerfScenario",
    "PerfTrace",
    "ProgressCurve",
    "RunTimeModel",
    "acq_time",
    "error_at",
    "evals_to_accuracy",
    "run_scenario",
    "sample_runtime",
    "sample_runtimes",
    "simulate",
]
