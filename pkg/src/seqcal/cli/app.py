"""Main CLI application using Typer."""

import json
from collections.abc import Iterator
from contextlib import contextmanager
from pathlib import Path
from typing import Any

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.table import Table

from seqcal.core.config import Settings, config_schema, load_settings
from seqcal.core.errors import ConfigError, SeqcalError
from seqcal.core.models import AcquisitionKind, HybridOrder, LiarRule
from seqcal.data import load_manifest
from seqcal.main import configure_logging
from seqcal.performance.models import AcqTimeKind, CurveKind, RunTimeKind
from seqcal.service import WorkflowService

EXIT_CONFIG = 2
EXIT_RUNTIME = 3

app = typer.Typer(
    name="seqcal",
    help="Batched sequential calibration and its parallel performance model.",
    no_args_is_help=True,
)
console = Console(force_terminal=False)
err_console = Console(stderr=True, force_terminal=False)

CONFIG_OPTION = typer.Option(None, "--config", "-c", help="YAML config file")
OUT_OPTION = typer.Option(None, "--out", "-o", help="Output directory")
JOBS_OPTION = typer.Option(None, "--jobs", "-j", help="Concurrent replicates / grid cells")
LOG_LEVEL_OPTION = typer.Option(None, "--log-level", help="debug, info, warning, error")
LOG_FORMAT_OPTION = typer.Option(None, "--log-format", help="console or json")
OUTPUT_ROOT_OPTION = typer.Option(
    None, "--output-root", help="Parent of default output directories"
)


def _put(tree: dict[str, Any], path: str, value: Any) -> None:
    """Set ``value`` at dotted ``path`` unless it is None."""
    if value is None:
        return
    *parents, leaf = path.split(".")
    for key in parents:
        tree = tree.setdefault(key, {})
    tree[leaf] = value


def _settings(config: Path | None, flags: dict[str, Any]) -> Settings:
    overrides: dict[str, Any] = {}
    for path, value in flags.items():
        _put(overrides, path, value)
    settings = load_settings(config, overrides)
    configure_logging(settings.app.log_level, settings.app.log_format)
    return settings


@contextmanager
def _exit_codes() -> Iterator[None]:
    """Map failures onto the documented exit codes."""
    try:
        yield
    except ConfigError as e:
        err_console.print(f"[red]config error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e
    except ValidationError as e:
        # models built from already loaded settings
        err_console.print(f"[red]config error:[/red] {e}")
        raise typer.Exit(EXIT_CONFIG) from e
    except SeqcalError as e:
        err_console.print(f"[red]error:[/red] {e}")
        raise typer.Exit(EXIT_RUNTIME) from e


@app.command()
def design(
    config: Path | None = CONFIG_OPTION,
    problem: str | None = typer.Option(
        None, "--problem", "-p", help="Test problem name or module:function"
    ),
    acq: AcquisitionKind | None = typer.Option(None, "--acq", help="Acquisition criterion"),
    n: int | None = typer.Option(None, "--n", help="Evaluations beyond the initial design"),
    n0: int | None = typer.Option(None, "--n0", help="Initial design size"),
    b: int | None = typer.Option(None, "--b", help="Batch size"),
    w: int | None = typer.Option(None, "--w", help="Worker count"),
    replicates: int | None = typer.Option(None, "--replicates", "-r"),
    seed: int | None = typer.Option(None, "--seed"),
    candidates: int | None = typer.Option(None, "--candidates", help="Candidate list size"),
    ref_size: int | None = typer.Option(None, "--ref-size", help="EIVAR reference set size"),
    liar: LiarRule | None = typer.Option(None, "--liar", help="Constant liar rule"),
    hybrid_order: HybridOrder | None = typer.Option(
        None, "--hybrid-order", help="Stage parity that runs EIVAR under hybrid"
    ),
    lower: list[float] | None = typer.Option(None, "--lower", help="Lower bound (repeatable)"),
    upper: list[float] | None = typer.Option(None, "--upper", help="Upper bound (repeatable)"),
    observation: float | None = typer.Option(None, "--observation", help="Observed output y"),
    noise_var: float | None = typer.Option(None, "--noise-var", help="Observation noise variance"),
    fit_starts: int | None = typer.Option(None, "--fit-starts", help="Optimizer starts per fit"),
    fit_restart_every: int | None = typer.Option(
        None, "--fit-restart-every", help="Stages between multi-start refits"
    ),
    fit_max_iter: int | None = typer.Option(None, "--fit-max-iter", help="Optimizer iterations"),
    nugget_floor: float | None = typer.Option(
        None, "--nugget-floor", help="Smallest nugget relative to the process variance"
    ),
    mad_grid: int | None = typer.Option(None, "--mad-grid", help="MAD grid points per axis"),
    mad: bool | None = typer.Option(None, "--mad/--no-mad", help="Track MAD per stage"),
    timing: bool | None = typer.Option(
        None, "--timing/--no-timing", help="Record wall-clock columns"
    ),
    jobs: int | None = JOBS_OPTION,
    log_level: str | None = LOG_LEVEL_OPTION,
    log_format: str | None = LOG_FORMAT_OPTION,
    output_root: Path | None = OUTPUT_ROOT_OPTION,
    out: Path | None = OUT_OPTION,
):
    """Run sequential design replicates and write one jobs/stages CSV pair each."""
    with _exit_codes():
        settings = _settings(
            config,
            {
                "design.problem": problem,
                "design.acquisition.kind": acq.value if acq else None,
                "design.n": n,
                "design.n0": n0,
                "design.b": b,
                "design.w": w,
                "design.replicates": replicates,
                "design.seed": seed,
                "design.acquisition.candidate_count": candidates,
                "design.acquisition.reference_count": ref_size,
                "design.acquisition.liar": liar.value if liar else None,
                "design.acquisition.hybrid_order": hybrid_order.value if hybrid_order else None,
                "design.lower": lower or None,
                "design.upper": upper or None,
                "design.observation": observation,
                "design.noise_var": noise_var,
                "design.fit.n_starts": fit_starts,
                "design.fit.restart_every": fit_restart_every,
                "design.fit.max_iter": fit_max_iter,
                "design.fit.nugget_floor": nugget_floor,
                "design.mad_grid": mad_grid,
                "design.compute_mad": mad,
                "design.record_timing": timing,
                "app.jobs": jobs,
                "app.log_level": log_level,
                "app.log_format": log_format,
                "app.output_root": output_root,
            },
        )
        outcome = WorkflowService(settings).design(out)

    table = Table(title=f"design: {outcome.out_dir}")
    table.add_column("replicate", justify="right")
    table.add_column("jobs", justify="right")
    table.add_column("stages", justify="right")
    table.add_column("final delta", justify="right")
    table.add_column("final MAD", justify="right")
    for trace in outcome.traces:
        last = trace.stages[-1] if trace.stages else None
        table.add_row(
            str(trace.replicate_id),
            str(len(trace.jobs)),
            str(len(trace.stages)),
            f"{last.delta_t:.4g}" if last else "-",
            f"{last.mad_t:.3g}" if last and last.mad_t is not None else "-",
        )
    console.print(table)
    if outcome.failures:
        for failure in outcome.failures:
            err_console.print(f"[red]failed:[/red] {failure}")
        raise typer.Exit(EXIT_RUNTIME)


@app.command()
def perf(
    config: Path | None = CONFIG_OPTION,
    from_trace: Path | None = typer.Option(
        None, "--from-trace", help="Design run whose stage times drive the acquisition model"
    ),
    label: str | None = typer.Option(None, "--label", help="Acquisition label of the scenario"),
    alpha: float | None = typer.Option(None, "--alpha", help="Target accuracy"),
    curve_kind: CurveKind | None = typer.Option(None, "--curve", help="Progress curve family"),
    curve_n: int | None = typer.Option(None, "--curve-n", help="Budget the curve is defined on"),
    exponent: float | None = typer.Option(None, "--exponent", help="Exponential curve exponent"),
    exponent_step: float | None = typer.Option(
        None, "--exponent-step", help="Exponent added per ascending batch size"
    ),
    piecewise: bool | None = typer.Option(
        None, "--piecewise/--no-piecewise", help="Hold the curve between stage boundaries"
    ),
    acq_kind: AcqTimeKind | None = typer.Option(None, "--acq-time", help="Acquisition time model"),
    acq_a: float | None = typer.Option(None, "--acq-a", help="Acquisition time intercept"),
    acq_b: float | None = typer.Option(None, "--acq-b", help="Acquisition time slope"),
    acq_c: float | None = typer.Option(None, "--acq-c", help="Acquisition time curvature"),
    acq_tail: float | None = typer.Option(
        None, "--acq-tail", help="Time of each pick after the first in a stage"
    ),
    run_kind: RunTimeKind | None = typer.Option(None, "--run-time", help="Run time model"),
    run_mean: float | None = typer.Option(None, "--run-mean", help="Mean simulation time"),
    run_std: float | None = typer.Option(None, "--run-std", help="Simulation time spread"),
    run_floor: float | None = typer.Option(None, "--run-floor", help="Shortest simulation time"),
    runtime_means: list[float] | None = typer.Option(
        None, "--runtime-mean", help="Run-time means to sweep (repeatable)"
    ),
    runtime_std_ratio: float | None = typer.Option(
        None, "--runtime-std-ratio", help="std/mean ratio for swept means"
    ),
    batch_sizes: list[int] | None = typer.Option(None, "--b", help="Batch sizes (repeatable)"),
    workers: list[int] | None = typer.Option(None, "--w", help="Worker counts (repeatable)"),
    replicates: int | None = typer.Option(None, "--replicates", "-r"),
    seed: int | None = typer.Option(None, "--seed"),
    jobs: int | None = JOBS_OPTION,
    log_level: str | None = LOG_LEVEL_OPTION,
    log_format: str | None = LOG_FORMAT_OPTION,
    output_root: Path | None = OUTPUT_ROOT_OPTION,
    out: Path | None = OUT_OPTION,
):
    """Simulate the performance model over a (b, w, run-time mean) grid."""
    with _exit_codes():
        settings = _settings(
            config,
            {
                "perf.label": label,
                "perf.alpha": alpha,
                "perf.curve.kind": curve_kind.value if curve_kind else None,
                "perf.curve.n": curve_n,
                "perf.curve.exponent": exponent,
                "perf.curve.exponent_step": exponent_step,
                "perf.curve.piecewise": piecewise,
                "perf.acq_time.kind": acq_kind.value if acq_kind else None,
                "perf.acq_time.a": acq_a,
                "perf.acq_time.b": acq_b,
                "perf.acq_time.c": acq_c,
                "perf.acq_time.tail": acq_tail,
                "perf.run_time.kind": run_kind.value if run_kind else None,
                "perf.run_time.mean": run_mean,
                "perf.run_time.std": run_std,
                "perf.run_time.floor": run_floor,
                "perf.grid.runtime_means": runtime_means or None,
                "perf.grid.runtime_std_ratio": runtime_std_ratio,
                "perf.grid.batch_sizes": batch_sizes or None,
                "perf.grid.workers": workers or None,
                "perf.replicates": replicates,
                "perf.seed": seed,
                "app.jobs": jobs,
                "app.log_level": log_level,
                "app.log_format": log_format,
                "app.output_root": output_root,
            },
        )
        outcome = WorkflowService(settings).perf(out, from_trace=from_trace)

    console.print(f"[green]{len(outcome.cells)} cells[/green] written to {outcome.out_dir}")
    for reason in outcome.skipped:
        console.print(f"[dim]skipped {reason}[/dim]")


@app.command()
def report(
    inputs: list[Path] = typer.Argument(None, help="Design or perf run directories"),
    config: Path | None = CONFIG_OPTION,
    baseline_workers: int | None = typer.Option(
        None, "--baseline-workers", help="Worker count used as the speedup baseline"
    ),
    log_level: str | None = LOG_LEVEL_OPTION,
    log_format: str | None = LOG_FORMAT_OPTION,
    output_root: Path | None = OUTPUT_ROOT_OPTION,
    out: Path | None = OUT_OPTION,
):
    """Aggregate runs into series.csv, summary.csv and a plotting script."""
    with _exit_codes():
        settings = _settings(
            config,
            {
                "report.inputs": [str(p) for p in inputs] if inputs else None,
                "report.baseline_workers": baseline_workers,
                "app.log_level": log_level,
                "app.log_format": log_format,
                "app.output_root": output_root,
            },
        )
        outcome = WorkflowService(settings).report(out_dir=out)

    console.print(f"[green]{len(outcome.series)} series[/green] written to {outcome.out_dir}")
    if outcome.best:
        table = Table(title="best batch size")
        for column in ("w", "run mean", "acq", "b", "median makespan"):
            table.add_column(column)
        for row in outcome.best:
            table.add_row(
                str(row.w), f"{row.run_mean:g}", row.acq, str(row.b), f"{row.makespan_median:.4g}"
            )
        console.print(table)


@app.command()
def replay(
    manifest_path: Path = typer.Argument(..., help="manifest.json or its run directory"),
    out: Path | None = OUT_OPTION,
):
    """Re-run a command from its manifest."""
    with _exit_codes():
        manifest = load_manifest(manifest_path)
        settings = load_settings(None, manifest.config)
        configure_logging(settings.app.log_level, settings.app.log_format)
        run_dir = manifest_path if manifest_path.is_dir() else manifest_path.parent
        target = out or run_dir / "replay"
        failures = WorkflowService(settings).replay(manifest, target)

    console.print(f"[green]replayed {manifest.command}[/green] into {target}")
    if failures:
        for failure in failures:
            err_console.print(f"[red]failed:[/red] {failure}")
        raise typer.Exit(EXIT_RUNTIME)


@app.command()
def schema():
    """Print the JSON schema of the config file."""
    typer.echo(json.dumps(config_schema(), indent=2))


if __name__ == "__main__":
    app()
