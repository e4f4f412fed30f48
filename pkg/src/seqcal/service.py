"""Workflow service that binds problems, engine, performance model and reports."""

import importlib
import json
from collections import defaultdict
from collections.abc import Callable
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime
from pathlib import Path
from typing import Any

import numpy as np
import structlog
from pydantic import BaseModel, ConfigDict

from seqcal.core.config import DesignConfig, PerfConfig, Settings
from seqcal.core.errors import ConfigError, DesignAborted, TraceSchemaError
from seqcal.core.models import (
    DesignTrace,
    EngineConfig,
    MetricSeries,
    ParameterSpace,
    RunManifest,
    SeedTriple,
)
from seqcal.core.problem import CalibrationProblem
from seqcal.data import (
    finish_manifest,
    read_design_trace,
    read_perf_traces,
    start_manifest,
    write_design_trace,
    write_perf_traces,
    write_series,
    write_summary,
)
from seqcal.data.manifest import MANIFEST_FILE
from seqcal.data.traces import (
    JOBS_FILE,
    PERF_JOBS_FILE,
    SERIES_FILE,
    SUMMARY_FILE,
    replicate_dir,
)
from seqcal.design import run_design
from seqcal.performance import (
    PerfScenario,
    PerfTrace,
    ProgressCurve,
    run_scenario,
)
from seqcal.performance.models import (
    AcqTimeKind,
    AcqTimeModel,
    CurveKind,
    evals_to_accuracy,
)
from seqcal.report import (
    BestBatch,
    SummaryRow,
    aggregate_series,
    best_batch_sizes,
    delta_series,
    mad_series,
    recorded_mad_series,
    summarize,
    wallclock_error_curve,
    wallclock_series,
    write_plot_script,
)
from seqcal.testbed import TestProblem, make, names, true_posterior_on

logger = structlog.get_logger()

TruePosterior = Callable[[np.ndarray], np.ndarray]


class ResolvedProblem(BaseModel):
    """A calibration problem plus its exact posterior when one is known."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    problem: CalibrationProblem
    test: TestProblem | None = None

    @property
    def truth(self) -> TruePosterior | None:
        test = self.test
        if test is None:
            return None
        return lambda thetas: true_posterior_on(test, thetas)


class DesignOutcome(BaseModel):
    out_dir: Path
    traces: list[DesignTrace]
    failures: list[str]


class PerfOutcome(BaseModel):
    out_dir: Path
    cells: list[str]
    skipped: list[str]


class ReportOutcome(BaseModel):
    out_dir: Path
    series: list[MetricSeries]
    summary: list[SummaryRow]
    best: list[BestBatch]


def _import_simulator(spec: str) -> Callable[[np.ndarray], float]:
    module_name, _, attr = spec.partition(":")
    try:
        simulator = getattr(importlib.import_module(module_name), attr)
    except (ImportError, AttributeError) as e:
        raise ConfigError(f"cannot import simulator {spec!r}: {e}") from e
    if not callable(simulator):
        raise ConfigError(f"simulator {spec!r} is not callable")
    return simulator  # type: ignore[no-any-return]


def resolve_problem(config: DesignConfig) -> ResolvedProblem:
    """Built-in test problem by name, or ``module:function`` with explicit bounds.

    Bounds, observation and noise variance given in the config override a
    test problem's own values.
    """
    overrides: dict[str, Any] = {}
    if config.lower is not None or config.upper is not None:
        if config.lower is None or config.upper is None:
            raise ConfigError("design.lower and design.upper must be given together")
        overrides["space"] = ParameterSpace(lower=config.lower, upper=config.upper)
    if config.observation is not None:
        overrides["observation"] = config.observation
    if config.noise_var is not None:
        overrides["noise_var"] = config.noise_var

    if config.problem in names():
        test = make(config.problem)
        if overrides:
            test = test.model_copy(update={"problem": test.problem.model_copy(update=overrides)})
        return ResolvedProblem(problem=test.problem, test=test)

    if ":" not in config.problem:
        choices = ", ".join(names())
        raise ConfigError(
            f"unknown problem {config.problem!r}; use one of {choices} or module:function"
        )
    missing = {"space", "observation", "noise_var"} - overrides.keys()
    if missing:
        raise ConfigError(
            f"custom problem {config.problem!r} needs lower, upper, observation and noise_var"
        )
    problem = CalibrationProblem(
        simulator=_import_simulator(config.problem),
        name=config.problem.rpartition(":")[2],
        **overrides,
    )
    return ResolvedProblem(problem=problem)


def engine_config(config: DesignConfig, replicate: int, compute_mad: bool) -> EngineConfig:
    return EngineConfig(
        n0=config.n0,
        n=config.n,
        b=config.b,
        w=config.w,
        acquisition=config.acquisition,
        fit=config.fit,
        seeds=SeedTriple.for_replicate(config.seed, replicate),
        replicate_id=replicate,
        compute_mad=compute_mad,
        mad_grid=config.mad_grid,
        record_timing=config.record_timing,
    )


def perf_cells(perf: PerfConfig) -> list[tuple[PerfScenario | None, str]]:
    """Scenarios of the (b, w, run-time mean) grid; invalid cells carry a reason instead.

    Raises InfeasibleTargetError when a cell's curve never reaches ``alpha``.
    """
    grid = perf.grid
    means = grid.runtime_means or [perf.run_time.mean]
    run_base = perf.run_time.model_copy(update={"seed": perf.seed})
    cells: list[tuple[PerfScenario | None, str]] = []
    for mean in means:
        run_model = run_base.with_mean(mean, grid.runtime_std_ratio)
        for w in grid.workers:
            for b in grid.batch_sizes:
                name = f"b{b}_w{w}_s{mean:g}"
                if b > w:
                    cells.append((None, f"{name}: b > w"))
                    continue
                curve = perf.curve.curve_for(b, grid.batch_sizes)
                stop_count = evals_to_accuracy(curve, perf.alpha)
                if w > stop_count:
                    cells.append((None, f"{name}: w > n_k={stop_count}"))
                    continue
                scenario = PerfScenario(
                    b=b,
                    w=w,
                    label=perf.label,
                    stop_count=stop_count,
                    curve=curve,
                    acq_model=perf.acq_time,
                    run_model=run_model,
                    replicates=perf.replicates,
                )
                cells.append((scenario, name))
    return cells


def ingest_trace(perf: PerfConfig, trace_dir: Path) -> PerfConfig:
    """Replace the acquisition model (and an empty empirical curve) with a design run's data."""
    trace = read_design_trace(_first_trace_dir(trace_dir))
    times = [s.acq_time for s in trace.stages]
    if any(t is None for t in times):
        raise ConfigError(f"{trace_dir}: trace was recorded without timing")
    acq = AcqTimeModel(kind=AcqTimeKind.MEASURED, measured=[t for t in times if t is not None])
    update: dict[str, Any] = {"acq_time": acq}
    if perf.curve.kind is CurveKind.EMPIRICAL and not perf.curve.table:
        series = delta_series(trace)
        n = max(perf.curve.n, int(series.x[-1]))
        curve = ProgressCurve.from_series(series.x, series.y_median, n=n)
        update["curve"] = perf.curve.model_copy(update={"table": curve.table, "n": n})
    logger.info("perf_trace_ingested", path=str(trace_dir), stages=len(times))
    return perf.model_copy(update=update)


def _first_trace_dir(path: Path) -> Path:
    if (path / JOBS_FILE).exists():
        return path
    found = sorted(p.parent for p in path.glob(f"*/{JOBS_FILE}"))
    if not found:
        raise ConfigError(f"no design trace under {path}")
    return found[0]


def _by_run(root: Path, trace_dirs: list[Path]) -> dict[str, list[Path]]:
    """Group trace directories by the nearest enclosing run directory under ``root``."""
    runs: dict[str, list[Path]] = defaultdict(list)
    for trace_dir in trace_dirs:
        run_dir = root
        for candidate in (trace_dir, *trace_dir.parents):
            if candidate == root or root not in candidate.parents:
                break
            if (candidate / MANIFEST_FILE).exists():
                run_dir = candidate
                break
        if run_dir == root:
            runs[root.name].append(trace_dir)
        else:
            runs[f"{root.name}/{run_dir.relative_to(root).as_posix()}"].append(trace_dir)
    return runs


def _design_key(trace: DesignTrace) -> str:
    """Replicates of one design share everything but their seeds and replicate id."""
    config = trace.config.model_dump(mode="json", exclude={"seeds", "replicate_id"})
    return json.dumps(
        {"problem": trace.problem, "observation": trace.observation, "config": config},
        sort_keys=True,
    )


def _check_shared_x(series: list[MetricSeries], tag: str) -> None:
    for s in series[1:]:
        if s.x != series[0].x:
            raise TraceSchemaError(f"{tag}: replicates record different stage counts")


class WorkflowService:
    """Runs one CLI command from resolved settings."""

    def __init__(self, settings: Settings):
        self.settings = settings

    def default_out_dir(self, command: str, tag: str) -> Path:
        stamp = datetime.now().strftime("%Y%m%d-%H%M%S")
        return self.settings.app.output_root / f"{command}-{tag}-{stamp}"

    def _map(self, fn: Callable[[Any], Any], items: list[Any]) -> list[Any]:
        jobs = self.settings.app.jobs
        if jobs <= 1 or len(items) <= 1:
            return [fn(item) for item in items]
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            return list(executor.map(fn, items))

    def _manifest(self, command: str, out_dir: Path, seeds: list[SeedTriple]) -> RunManifest:
        out_dir.mkdir(parents=True, exist_ok=True)
        return start_manifest(out_dir, command, self.settings.model_dump(mode="json"), seeds)

    def design(self, out_dir: Path | None = None) -> DesignOutcome:
        """Run every replicate of the configured design; failed replicates keep partial traces."""
        config = self.settings.design
        resolved = resolve_problem(config)
        compute_mad = config.compute_mad
        if compute_mad is None:
            compute_mad = resolved.test is not None
        if compute_mad and resolved.test is None:
            raise ConfigError("compute_mad needs a built-in test problem")
        out_dir = out_dir or self.default_out_dir("design", resolved.problem.name)
        replicates = list(range(config.replicates))
        configs = [engine_config(config, r, compute_mad) for r in replicates]
        manifest = self._manifest("design", out_dir, [c.seeds for c in configs])

        def one(engine: EngineConfig) -> tuple[DesignTrace, str | None]:
            try:
                trace = run_design(resolved.problem, engine, truth=resolved.truth)
                error = None
            except DesignAborted as e:
                trace, error = e.trace, f"replicate {engine.replicate_id}: {e}"
            write_design_trace(trace, replicate_dir(out_dir, engine.replicate_id))
            return trace, error

        results = self._map(one, configs)
        traces = [trace for trace, _ in results]
        failures = [error for _, error in results if error is not None]
        artifacts = [p for r in replicates for p in replicate_dir(out_dir, r).glob("*.csv")]
        finish_manifest(manifest, out_dir, artifacts, "failed" if failures else "complete")
        logger.info(
            "design_finished",
            out_dir=str(out_dir),
            replicates=len(traces),
            failures=len(failures),
        )
        return DesignOutcome(out_dir=out_dir, traces=traces, failures=failures)

    def perf(self, out_dir: Path | None = None, from_trace: Path | None = None) -> PerfOutcome:
        """Simulate every valid cell of the performance grid."""
        if from_trace is not None:
            perf = ingest_trace(self.settings.perf, from_trace)
            self.settings = self.settings.model_copy(update={"perf": perf})
        perf = self.settings.perf
        cells = perf_cells(perf)
        out_dir = out_dir or self.default_out_dir("perf", perf.label)
        manifest = self._manifest("perf", out_dir, [])
        skipped = [reason for scenario, reason in cells if scenario is None]
        for reason in skipped:
            logger.warning("perf_cell_skipped", reason=reason)
        scenarios = [scenario for scenario, _ in cells if scenario is not None]

        def one(scenario: PerfScenario) -> list[Path]:
            traces = run_scenario(scenario)
            return list(write_perf_traces(scenario, traces, out_dir / scenario.cell_name))

        artifacts = [p for paths in self._map(one, scenarios) for p in paths]
        finish_manifest(manifest, out_dir, artifacts)
        return PerfOutcome(
            out_dir=out_dir, cells=[s.cell_name for s in scenarios], skipped=skipped
        )

    def report(
        self, inputs: list[Path] | None = None, out_dir: Path | None = None
    ) -> ReportOutcome:
        """Aggregate design and perf runs into ``series.csv``, ``summary.csv`` and a plot script.

        Traces are attributed to their nearest run directory (the closest
        ancestor holding a manifest), so a replay nested inside a run is
        reported as a run of its own.
        """
        inputs = inputs or self.settings.report.inputs
        if not inputs:
            raise ConfigError("report needs at least one input directory")
        out_dir = out_dir or self.default_out_dir("report", Path(inputs[0]).name)
        manifest = self._manifest("report", out_dir, [])

        series: list[MetricSeries] = []
        summary: list[SummaryRow] = []
        cell_count = 0
        for root in inputs:
            root = Path(root)
            design_dirs = sorted(p.parent for p in root.glob(f"**/{JOBS_FILE}"))
            perf_dirs = sorted(p.parent for p in root.glob(f"**/{PERF_JOBS_FILE}"))
            if not design_dirs and not perf_dirs:
                raise ConfigError(f"{root}: no design or perf traces found")
            for run_name, dirs in _by_run(root, design_dirs).items():
                series += self._design_series(run_name, dirs)
            for run_name, dirs in _by_run(root, perf_dirs).items():
                cells: list[tuple[PerfScenario, list[PerfTrace]]] = []
                prefix = "" if run_name == root.name else f"{run_name}/"
                for cell_dir in dirs:
                    scenario, traces = read_perf_traces(cell_dir)
                    cells.append((scenario, traces))
                    tag = f"{prefix}{scenario.cell_name}"
                    series.append(wallclock_series(traces, label=f"wallclock/{tag}"))
                    series.append(
                        wallclock_error_curve(traces, scenario.curve, label=f"error/{tag}")
                    )
                summary += summarize(cells, self.settings.report.baseline_workers)
                cell_count += len(cells)

        best = best_batch_sizes(summary)
        artifacts = [
            write_series(series, out_dir / SERIES_FILE),
            write_plot_script(series, out_dir),
        ]
        if summary:
            artifacts.append(write_summary(summary, out_dir / SUMMARY_FILE))
        finish_manifest(manifest, out_dir, artifacts)
        logger.info("report_finished", out_dir=str(out_dir), series=len(series), cells=cell_count)
        return ReportOutcome(out_dir=out_dir, series=series, summary=summary, best=best)

    def _design_series(self, run_name: str, trace_dirs: list[Path]) -> list[MetricSeries]:
        """One delta (and MAD) series per distinct configuration within a run."""
        traces = [read_design_trace(d) for d in trace_dirs]
        complete = [t for t in traces if t.complete]
        if len(complete) < len(traces):
            logger.warning(
                "incomplete_traces_skipped", run=run_name, skipped=len(traces) - len(complete)
            )
        groups: dict[str, list[DesignTrace]] = defaultdict(list)
        for trace in complete:
            groups[_design_key(trace)].append(trace)

        out: list[MetricSeries] = []
        used: set[str] = set()
        for group in groups.values():
            first = group[0]
            tag = f"{first.problem}/{first.config.acquisition.kind.value}/{run_name}"
            if tag in used:
                tag = f"{tag}/{len(used)}"
            used.add(tag)
            deltas = [delta_series(t) for t in group]
            _check_shared_x(deltas, tag)
            out.append(aggregate_series(deltas, label=f"delta/{tag}"))
            mads = [recorded_mad_series(t) for t in group]
            recorded = [m for m in mads if m is not None]
            if len(recorded) == len(mads):
                _check_shared_x(recorded, tag)
                out.append(aggregate_series(recorded, label=f"mad/{tag}"))
            elif first.problem in names():
                test = make(first.problem)
                out.append(
                    aggregate_series([mad_series(t, test) for t in group], label=f"mad/{tag}")
                )
        return out

    def replay(self, manifest: RunManifest, out_dir: Path) -> list[str]:
        """Re-run the command recorded in ``manifest`` into ``out_dir``; returns failures."""
        match manifest.command:
            case "design":
                return self.design(out_dir).failures
            case "perf":
                self.perf(out_dir)
            case "report":
                self.report(out_dir=out_dir)
            case other:
                raise ConfigError(f"manifest records unknown command {other!r}")
        return []
