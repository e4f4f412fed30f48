"""CSV persistence of design traces, performance traces and report tables.

Every file starts with an 8-line ``#`` header: tool version, file kind and up
to six ``key: value`` lines. Floats are written with 17 significant digits.
"""

import csv
import json
from collections.abc import Iterable, Iterator, Sequence
from pathlib import Path
from typing import Any

import structlog
from pydantic import ValidationError

from seqcal import __version__
from seqcal.core.errors import TraceSchemaError
from seqcal.core.models import (
    DesignTrace,
    EngineConfig,
    JobRecord,
    MetricSeries,
    StageRecord,
)
from seqcal.performance.models import PerfScenario, PerfTrace
from seqcal.report.metrics import SummaryRow

logger = structlog.get_logger()

HEADER_LINES = 8

JOBS_FILE = "jobs.csv"
STAGES_FILE = "stages.csv"
PERF_JOBS_FILE = "perf_jobs.csv"
PERF_STAGES_FILE = "perf_stages.csv"
SERIES_FILE = "series.csv"
SUMMARY_FILE = "summary.csv"

STAGE_COLUMNS = [
    "replicate_id",
    "stage",
    "n_t",
    "consumed",
    "acq_time",
    "delta_t",
    "mad_t",
    "criterion",
    "pending",
    "scale",
    "nugget",
]
PERF_JOB_COLUMNS = ["replicate_id", "job_id", "created_stage", "consumed_stage", "end_time"]
PERF_STAGE_COLUMNS = ["replicate_id", "stage", "n_t", "end_time", "pending"]
SERIES_COLUMNS = ["series_label", "x_unit", "y_unit", "x", "y_median", "y_q1", "y_q3"]
SUMMARY_COLUMNS = [
    "b",
    "w",
    "acq",
    "makespan_median",
    "speedup",
    "idle_avg",
    "compute_hours",
    "run_mean",
]


def fmt(value: float | int | str | None) -> str:
    """Cell text; floats round-trip exactly, None is empty."""
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.17g}"
    return str(value)


def _float(text: str) -> float | None:
    return float(text) if text != "" else None


def job_columns(dims: int) -> list[str]:
    thetas = [f"theta_{i}" for i in range(1, dims + 1)]
    return ["replicate_id", "job_id", "stage", *thetas, "output", "submit_time", "complete_time"]


def _header(kind: str, fields: dict[str, str]) -> list[str]:
    if len(fields) > HEADER_LINES - 2:
        raise ValueError(f"header holds at most {HEADER_LINES - 2} fields")
    lines = [f"# seqcal {__version__}", f"# kind: {kind}"]
    lines += [f"# {key}: {value}" for key, value in fields.items()]
    lines += ["#"] * (HEADER_LINES - len(lines))
    return lines


def _write(
    path: Path,
    kind: str,
    fields: dict[str, str],
    columns: Sequence[str],
    rows: Iterable[Sequence[Any]],
) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as f:
        for line in _header(kind, fields):
            f.write(line + "\n")
        writer = csv.writer(f, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([fmt(v) for v in row])
    return path


def read_header(path: Path) -> dict[str, str]:
    """``key: value`` pairs of a file header, including ``kind``."""
    fields: dict[str, str] = {}
    with path.open(encoding="utf-8") as f:
        for _ in range(HEADER_LINES):
            line = f.readline().rstrip("\n")
            if not line.startswith("#"):
                raise TraceSchemaError(f"{path}: header shorter than {HEADER_LINES} lines")
            key, sep, value = line[1:].strip().partition(": ")
            if sep:
                fields[key] = value
    return fields


def _read(
    path: Path, kind: str, columns: Sequence[str] | None = None
) -> tuple[dict[str, str], list[str], list[dict[str, str]]]:
    if not path.exists():
        raise TraceSchemaError(f"{path}: missing trace file")
    header = read_header(path)
    if header.get("kind") != kind:
        raise TraceSchemaError(f"{path}: expected kind {kind!r}, found {header.get('kind')!r}")
    with path.open(newline="", encoding="utf-8") as f:
        reader = csv.DictReader(line for line in f if not line.startswith("#"))
        found = list(reader.fieldnames or [])
        if columns is not None and found != list(columns):
            raise TraceSchemaError(f"{path}: columns {found} do not match {list(columns)}")
        rows = list(reader)
    return header, found, rows


def _rows(rows: list[dict[str, str]], path: Path) -> Iterator[dict[str, str]]:
    for i, row in enumerate(rows, start=1):
        if None in row or any(v is None for v in row.values()):
            raise TraceSchemaError(f"{path}: row {i} has the wrong number of cells")
        yield row


def replicate_dir(out_dir: Path, replicate: int) -> Path:
    return out_dir / f"replicate_{replicate:03d}"


def write_design_trace(trace: DesignTrace, out_dir: Path) -> tuple[Path, Path]:
    """Write ``jobs.csv`` and ``stages.csv`` for one replicate into ``out_dir``."""
    config = trace.config
    seeds = config.seeds
    dims = len(trace.jobs[0].theta) if trace.jobs else 0
    fields = {
        "problem": trace.problem,
        "observation": fmt(trace.observation),
        "replicate": str(config.replicate_id),
        "seeds": f"init={seeds.init} candidates={seeds.candidates} rng={seeds.rng}",
        "complete": str(trace.complete).lower(),
        "config": config.model_dump_json(),
    }
    rid = config.replicate_id
    jobs = _write(
        out_dir / JOBS_FILE,
        "jobs",
        fields,
        job_columns(dims),
        (
            [rid, job.job_id, job.stage, *job.theta, job.output, job.submit_time, job.complete_time]
            for job in trace.jobs
        ),
    )
    width = max((len(s.log_lengthscales) for s in trace.stages), default=dims)
    stage_columns = [*STAGE_COLUMNS, *(f"log_lengthscale_{i}" for i in range(1, width + 1))]
    stages = _write(
        out_dir / STAGES_FILE,
        "stages",
        fields,
        stage_columns,
        (
            [
                rid,
                s.stage,
                s.n_t,
                s.consumed,
                s.acq_time,
                s.delta_t,
                s.mad_t,
                s.criterion,
                s.pending,
                s.scale,
                s.nugget,
                *s.log_lengthscales,
            ]
            for s in trace.stages
        ),
    )
    logger.debug("design_trace_written", path=str(out_dir), jobs=len(trace.jobs))
    return jobs, stages


def read_design_trace(trace_dir: Path) -> DesignTrace:
    """Rebuild a DesignTrace from the ``jobs.csv``/``stages.csv`` pair in ``trace_dir``."""
    jobs_path = trace_dir / JOBS_FILE
    stages_path = trace_dir / STAGES_FILE
    header, columns, job_rows = _read(jobs_path, "jobs")
    try:
        config = EngineConfig.model_validate_json(header["config"])
    except (KeyError, ValidationError) as e:
        raise TraceSchemaError(f"{jobs_path}: header has no valid config") from e
    dims = sum(1 for c in columns if c.startswith("theta_"))
    if columns != job_columns(dims):
        raise TraceSchemaError(f"{jobs_path}: columns {columns} do not match {job_columns(dims)}")
    try:
        jobs = [
            JobRecord(
                job_id=int(row["job_id"]),
                stage=int(row["stage"]),
                theta=[float(row[f"theta_{i}"]) for i in range(1, dims + 1)],
                output=float(row["output"]),
                submit_time=_float(row["submit_time"]),
                complete_time=_float(row["complete_time"]),
            )
            for row in _rows(job_rows, jobs_path)
        ]
        _, stage_cols, stage_rows = _read(stages_path, "stages")
        if stage_cols[: len(STAGE_COLUMNS)] != STAGE_COLUMNS:
            raise TraceSchemaError(f"{stages_path}: unexpected columns {stage_cols}")
        extra = stage_cols[len(STAGE_COLUMNS):]
        stages = [
            StageRecord(
                stage=int(row["stage"]),
                n_t=int(row["n_t"]),
                consumed=int(row["consumed"]),
                acq_time=_float(row["acq_time"]),
                delta_t=float(row["delta_t"]),
                mad_t=_float(row["mad_t"]),
                criterion=row["criterion"],
                pending=int(row["pending"]),
                scale=_float(row["scale"]),
                nugget=_float(row["nugget"]),
                log_lengthscales=[float(row[c]) for c in extra if row[c] != ""],
            )
            for row in _rows(stage_rows, stages_path)
        ]
    except ValueError as e:
        raise TraceSchemaError(f"{trace_dir}: malformed value: {e}") from e
    return DesignTrace(
        problem=header.get("problem", "custom"),
        observation=float(header.get("observation", "nan")),
        config=config,
        jobs=jobs,
        stages=stages,
        complete=header.get("complete") == "true",
    )


def write_perf_traces(
    scenario: PerfScenario, traces: Sequence[PerfTrace], out_dir: Path
) -> tuple[Path, Path]:
    """Write every replicate of one grid cell into ``perf_jobs.csv``/``perf_stages.csv``."""
    fields = {
        "cell": scenario.cell_name,
        "label": scenario.label,
        "replicates": str(len(traces)),
        "stop_count": str(scenario.stop_count),
        "scenario": scenario.model_dump_json(),
    }
    jobs = _write(
        out_dir / PERF_JOBS_FILE,
        "perf_jobs",
        fields,
        PERF_JOB_COLUMNS,
        (
            [t.replicate, j, created, consumed, end]
            for t in traces
            for j, (created, consumed, end) in enumerate(
                zip(t.job_stage, t.consumed_stage, t.job_end), start=1
            )
        ),
    )
    stages = _write(
        out_dir / PERF_STAGES_FILE,
        "perf_stages",
        fields,
        PERF_STAGE_COLUMNS,
        (
            [t.replicate, stage, n_t, end, pending]
            for t in traces
            for stage, (n_t, end, pending) in enumerate(
                zip(t.stage_nt, t.stage_end, t.pending_sizes)
            )
        ),
    )
    logger.debug("perf_traces_written", path=str(out_dir), replicates=len(traces))
    return jobs, stages


def read_perf_traces(cell_dir: Path) -> tuple[PerfScenario, list[PerfTrace]]:
    """Scenario and per-replicate traces of one grid cell directory."""
    jobs_path = cell_dir / PERF_JOBS_FILE
    stages_path = cell_dir / PERF_STAGES_FILE
    header, _, job_rows = _read(jobs_path, "perf_jobs", PERF_JOB_COLUMNS)
    _, _, stage_rows = _read(stages_path, "perf_stages", PERF_STAGE_COLUMNS)
    try:
        scenario = PerfScenario.model_validate_json(header["scenario"])
    except (KeyError, ValidationError) as e:
        raise TraceSchemaError(f"{jobs_path}: header has no valid scenario") from e

    traces: dict[int, PerfTrace] = {}

    def trace_for(replicate: int) -> PerfTrace:
        if replicate not in traces:
            traces[replicate] = PerfTrace(
                replicate=replicate, b=scenario.b, w=scenario.w, stage_end=[]
            )
        return traces[replicate]

    try:
        for row in _rows(job_rows, jobs_path):
            t = trace_for(int(row["replicate_id"]))
            consumed = row["consumed_stage"]
            t.job_end.append(float(row["end_time"]))
            t.job_stage.append(int(row["created_stage"]))
            t.consumed_stage.append(int(consumed) if consumed != "" else None)
        for row in _rows(stage_rows, stages_path):
            t = trace_for(int(row["replicate_id"]))
            t.stage_end.append(float(row["end_time"]))
            t.stage_nt.append(int(row["n_t"]))
            t.pending_sizes.append(int(row["pending"]))
    except ValueError as e:
        raise TraceSchemaError(f"{cell_dir}: malformed value: {e}") from e
    for replicate, t in traces.items():
        if not t.stage_end:
            raise TraceSchemaError(f"{stages_path}: no stages for replicate {replicate}")
    return scenario, [traces[k] for k in sorted(traces)]


def write_series(series: Sequence[MetricSeries], path: Path) -> Path:
    return _write(
        path,
        "series",
        {"series": str(len(series))},
        SERIES_COLUMNS,
        (
            [s.label, s.x_unit, s.y_unit, x, med, q1, q3]
            for s in series
            for x, med, q1, q3 in zip(s.x, s.y_median, s.y_q1, s.y_q3)
        ),
    )


def read_series(path: Path) -> list[MetricSeries]:
    _, _, rows = _read(path, "series", SERIES_COLUMNS)
    grouped: dict[str, dict[str, Any]] = {}
    try:
        for row in _rows(rows, path):
            s = grouped.setdefault(
                row["series_label"],
                {
                    "label": row["series_label"],
                    "x_unit": row["x_unit"],
                    "y_unit": row["y_unit"],
                    "x": [],
                    "y_median": [],
                    "y_q1": [],
                    "y_q3": [],
                },
            )
            for column in ("x", "y_median", "y_q1", "y_q3"):
                s[column].append(float(row[column]))
        return [MetricSeries(**s) for s in grouped.values()]
    except (ValueError, ValidationError) as e:
        raise TraceSchemaError(f"{path}: malformed series: {e}") from e


def write_summary(
    rows: Sequence[SummaryRow], path: Path, fields: dict[str, str] | None = None
) -> Path:
    return _write(
        path,
        "summary",
        fields or {},
        SUMMARY_COLUMNS,
        ([getattr(r, c) for c in SUMMARY_COLUMNS] for r in rows),
    )


def read_summary(path: Path) -> list[SummaryRow]:
    _, _, rows = _read(path, "summary", SUMMARY_COLUMNS)
    try:
        return [
            SummaryRow.model_validate({k: (v if v != "" else None) for k, v in row.items()})
            for row in _rows(rows, path)
        ]
    except ValidationError as e:
        raise TraceSchemaError(f"{path}: malformed summary: {e}") from e


def dump_json(path: Path, data: dict[str, Any]) -> None:
    """Write JSON through a temporary file so readers never see a partial document."""
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(data, indent=2, sort_keys=True), encoding="utf-8")
    tmp.replace(path)
