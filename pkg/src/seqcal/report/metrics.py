"""Evaluation metrics over design and performance-model traces."""

from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence

import numpy as np
from pydantic import BaseModel

from seqcal.core.errors import MissingBaselineError
from seqcal.core.models import DesignTrace, KernelParams, MetricSeries
from seqcal.core.problem import CalibrationProblem, grid_points
from seqcal.emulator import GpPosterior, build_posterior, estimated_posterior
from seqcal.performance.models import PerfScenario, PerfTrace, ProgressCurve, error_at
from seqcal.testbed import TestProblem, true_posterior_on

QUARTILES = (50.0, 25.0, 75.0)


class SummaryRow(BaseModel):
    """One performance-model cell aggregated over replicates."""

    b: int
    w: int
    acq: str
    makespan_median: float
    speedup: float | None = None
    idle_avg: float
    compute_hours: float
    run_mean: float = 1.0


class BestBatch(BaseModel):
    """Makespan-minimizing batch size for one (w, run-time mean, acquisition) group."""

    w: int
    run_mean: float
    acq: str
    b: int
    makespan_median: float


def quartiles(values: np.ndarray, axis: int = 0) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(median, q1, q3) along ``axis``."""
    median, q1, q3 = np.percentile(values, QUARTILES, axis=axis)
    return median, q1, q3


def _single(
    label: str, x_unit: str, y_unit: str, x: Sequence[float], y: Sequence[float]
) -> MetricSeries:
    values = [float(v) for v in y]
    return MetricSeries(
        label=label,
        x_unit=x_unit,
        y_unit=y_unit,
        x=[float(v) for v in x],
        y_median=values,
        y_q1=list(values),
        y_q3=list(values),
    )


def delta_series(trace: DesignTrace) -> MetricSeries:
    """Running minimum of |y - output| over the jobs in consumption order."""
    if not trace.jobs:
        raise ValueError("trace has no jobs")
    losses = np.abs(trace.observation - np.array([job.output for job in trace.jobs]))
    running = np.minimum.accumulate(losses)
    x = np.arange(1, len(running) + 1)
    label = f"delta/{trace.config.acquisition.kind.value}"
    return _single(label, "evaluations", "error", x, running)


def stage_emulators(trace: DesignTrace) -> list[GpPosterior]:
    """Rebuild each stage's emulator from the recorded hyperparameters."""
    emulators = []
    for stage in trace.stages:
        if stage.scale is None or stage.nugget is None or not stage.log_lengthscales:
            raise ValueError(f"stage {stage.stage} has no recorded hyperparameters")
        jobs = trace.jobs_through(stage.stage)
        X = np.array([job.theta for job in jobs], dtype=float)
        y = np.array([job.output for job in jobs], dtype=float)
        params = KernelParams(
            log_lengthscales=stage.log_lengthscales, scale=stage.scale, nugget=stage.nugget
        )
        emulators.append(build_posterior(X, y, params))
    return emulators


def mean_absolute_difference(truth: np.ndarray, estimate: np.ndarray) -> float:
    return float(np.mean(np.abs(np.asarray(truth) - np.asarray(estimate))))


def mad_series(
    trace: DesignTrace,
    test: TestProblem,
    theta_ref: np.ndarray | None = None,
    gp_per_stage: Sequence[GpPosterior] | None = None,
) -> MetricSeries:
    """MAD between the true and the emulator-based unnormalized posterior per stage.

    ``theta_ref`` defaults to the run's uniform MAD grid; ``gp_per_stage``
    defaults to emulators rebuilt from the trace.
    """
    problem: CalibrationProblem = test.problem
    if theta_ref is None:
        theta_ref = grid_points(problem.space, trace.config.mad_grid)
    if gp_per_stage is None:
        gp_per_stage = stage_emulators(trace)
    if len(gp_per_stage) != len(trace.stages):
        raise ValueError(f"{len(gp_per_stage)} emulators for {len(trace.stages)} stages")
    truth = true_posterior_on(test, theta_ref)
    values = [
        mean_absolute_difference(truth, estimated_posterior(gp, problem, theta_ref))
        for gp in gp_per_stage
    ]
    x = [trace.config.n0 + stage.consumed for stage in trace.stages]
    return _single(f"mad/{trace.config.acquisition.kind.value}", "evaluations", "error", x, values)


def recorded_mad_series(trace: DesignTrace) -> MetricSeries | None:
    """MAD values recorded during the run, if any."""
    stages = [s for s in trace.stages if s.mad_t is not None]
    if not stages:
        return None
    x = [trace.config.n0 + s.consumed for s in stages]
    y = [s.mad_t for s in stages if s.mad_t is not None]
    return _single(f"mad/{trace.config.acquisition.kind.value}", "evaluations", "error", x, y)


def aggregate_series(series: Sequence[MetricSeries], label: str | None = None) -> MetricSeries:
    """Median and quartiles across replicate series that share their x values."""
    if not series:
        raise ValueError("nothing to aggregate")
    x = series[0].x
    for s in series[1:]:
        if s.x != x:
            raise ValueError(f"series {s.label} does not share x values with {series[0].label}")
    median, q1, q3 = quartiles(np.array([s.y_median for s in series], dtype=float))
    return MetricSeries(
        label=label or series[0].label,
        x_unit=series[0].x_unit,
        y_unit=series[0].y_unit,
        x=list(x),
        y_median=median.tolist(),
        y_q1=q1.tolist(),
        y_q3=q3.tolist(),
    )


def _completion_errors(trace: PerfTrace, curve: ProgressCurve, times: np.ndarray) -> np.ndarray:
    ends = np.sort(np.asarray(trace.job_end, dtype=float))
    done = np.searchsorted(ends, times, side="right")
    return np.array([error_at(curve, int(j)) for j in done])


def wallclock_error_curve(
    perf: Sequence[PerfTrace], curve: ProgressCurve, label: str = "error"
) -> MetricSeries:
    """Error level against elapsed wall-clock time, aggregated over replicates.

    Each replicate is a step function: after its j-th completion the error is
    error_at(j). The steps are evaluated at every distinct completion time.
    """
    if not perf:
        raise ValueError("no performance traces")
    times = np.unique(np.concatenate([np.asarray(t.job_end, dtype=float) for t in perf]))
    errors = np.array([_completion_errors(t, curve, times) for t in perf])
    median, q1, q3 = quartiles(errors)
    return MetricSeries(
        label=label,
        x_unit="seconds",
        y_unit="error",
        x=times.tolist(),
        y_median=median.tolist(),
        y_q1=q1.tolist(),
        y_q3=q3.tolist(),
    )


def wallclock_series(perf: Sequence[PerfTrace], label: str = "wallclock") -> MetricSeries:
    """Time of the j-th completion against j, aggregated over replicates."""
    if not perf:
        raise ValueError("no performance traces")
    lengths = {len(t.job_end) for t in perf}
    if len(lengths) != 1:
        raise ValueError("traces do not share a stop count")
    ends = np.sort(np.array([t.job_end for t in perf], dtype=float), axis=1)
    median, q1, q3 = quartiles(ends)
    return MetricSeries(
        label=label,
        x_unit="evaluations",
        y_unit="seconds",
        x=list(range(1, ends.shape[1] + 1)),
        y_median=median.tolist(),
        y_q1=q1.tolist(),
        y_q3=q3.tolist(),
    )


def makespan(perf: PerfTrace) -> float:
    return perf.makespan


def speedup(
    times: Mapping[tuple[int, int], float],
    baseline_workers: int | None = None,
) -> dict[tuple[int, int], float]:
    """Makespan ratio against the baseline worker count of the same batch size.

    ``times`` maps (w, b) to makespan. The baseline is ``baseline_workers``
    when given, otherwise the smallest w available for that b.
    """
    baselines: dict[int, float] = {}
    by_batch: dict[int, list[int]] = defaultdict(list)
    for w, b in times:
        by_batch[b].append(w)
    for b, workers in by_batch.items():
        base_w = min(workers) if baseline_workers is None else baseline_workers
        if (base_w, b) not in times:
            raise MissingBaselineError(f"no makespan for baseline w={base_w}, b={b}")
        baselines[b] = times[(base_w, b)]
    return {(w, b): baselines[b] / value for (w, b), value in times.items()}


def idle_time(perf: PerfTrace, w: int | None = None) -> float:
    """Average idle time per worker.

    A consumed job's worker idles from its completion to the end of the stage
    that consumed it; a job still pending at the end idles until the makespan.
    """
    w = w or perf.w
    end = perf.makespan
    total = 0.0
    for c, stage in zip(perf.job_end, perf.consumed_stage):
        release = perf.stage_end[stage] if stage is not None else end
        total += max(0.0, release - c)
    return total / w


def computing_hours(perf: PerfTrace, w: int | None = None) -> float:
    """Worker count times makespan."""
    return (w or perf.w) * perf.makespan


def summarize(
    cells: Iterable[tuple[PerfScenario, Sequence[PerfTrace]]],
    baseline_workers: int | None = None,
) -> list[SummaryRow]:
    """One summary row per cell, with speedup within each (acquisition, run-time mean)."""
    rows = []
    for scenario, traces in cells:
        spans = np.array([t.makespan for t in traces])
        rows.append(
            SummaryRow(
                b=scenario.b,
                w=scenario.w,
                acq=scenario.label,
                makespan_median=float(np.median(spans)),
                idle_avg=float(np.median([idle_time(t) for t in traces])),
                compute_hours=float(np.median([computing_hours(t) for t in traces])),
                run_mean=scenario.run_model.mean,
            )
        )
    groups: dict[tuple[str, float], list[SummaryRow]] = defaultdict(list)
    for row in rows:
        groups[(row.acq, row.run_mean)].append(row)
    for group in groups.values():
        ratios = speedup({(r.w, r.b): r.makespan_median for r in group}, baseline_workers)
        for row in group:
            row.speedup = ratios[(row.w, row.b)]
    return rows


def best_batch_sizes(summary: Sequence[SummaryRow]) -> list[BestBatch]:
    """Batch size with the lowest median makespan per (w, run-time mean, acquisition)."""
    groups: dict[tuple[int, float, str], list[SummaryRow]] = defaultdict(list)
    for row in summary:
        groups[(row.w, row.run_mean, row.acq)].append(row)
    best = []
    for (w, run_mean, acq), rows in sorted(groups.items()):
        winner = min(rows, key=lambda r: (r.makespan_median, r.b))
        best.append(
            BestBatch(
                w=w,
                run_mean=run_mean,
                acq=acq,
                b=winner.b,
                makespan_median=winner.makespan_median,
            )
        )
    return best
