"""Tests for CSV traces and run manifests."""

import json

import pytest

from seqcal.core.errors import ConfigError, TraceSchemaError
from seqcal.core.models import AcquisitionKind, DesignTrace, JobRecord, SeedTriple, StageRecord
from seqcal.data import (
    finish_manifest,
    load_manifest,
    read_design_trace,
    read_perf_traces,
    read_series,
    read_summary,
    start_manifest,
    write_design_trace,
    write_perf_traces,
    write_series,
    write_summary,
)
from seqcal.data.traces import HEADER_LINES, JOBS_FILE, read_header, replicate_dir
from seqcal.performance import (
    AcqTimeModel,
    PerfScenario,
    ProgressCurve,
    RunTimeModel,
    run_scenario,
)
from seqcal.performance.models import RunTimeKind
from seqcal.report import SummaryRow, delta_series


@pytest.fixture
def trace(make_engine_config):
    return DesignTrace(
        problem="sphere",
        observation=0.1,
        config=make_engine_config(n=2, n0=2, kind=AcquisitionKind.EIVAR),
        jobs=[
            JobRecord(job_id=1, stage=0, theta=[0.1, 1 / 3], output=2.5),
            JobRecord(job_id=2, stage=0, theta=[-4.0, 2.0], output=20.0),
            JobRecord(
                job_id=3,
                stage=1,
                theta=[0.3, 0.7],
                output=0.58,
                submit_time=0.0,
                complete_time=0.01,
            ),
        ],
        stages=[
            StageRecord(
                stage=1,
                n_t=2,
                consumed=1,
                acq_time=0.25,
                delta_t=0.48,
                criterion="eivar",
                pending=1,
                log_lengthscales=[0.1, -0.2],
                scale=2.0,
                nugget=1e-7,
            )
        ],
        complete=False,
    )


def test_design_trace_written_and_read_back(trace, tmp_path):
    jobs_path, _ = write_design_trace(trace, tmp_path)
    assert read_design_trace(tmp_path).model_dump() == trace.model_dump()

    lines = jobs_path.read_text().splitlines()
    assert all(line.startswith("#") for line in lines[:HEADER_LINES])
    assert lines[HEADER_LINES].startswith("replicate_id,job_id,stage,theta_1,theta_2,output")
    header = read_header(jobs_path)
    assert header["kind"] == "jobs"
    assert header["complete"] == "false"
    assert header["problem"] == "sphere"


def test_missing_and_wrong_kind_files(trace, tmp_path):
    with pytest.raises(TraceSchemaError):
        read_design_trace(tmp_path)
    write_design_trace(trace, tmp_path)
    (tmp_path / "stages.csv").replace(tmp_path / "other.csv")
    (tmp_path / JOBS_FILE).replace(tmp_path / "stages.csv")
    (tmp_path / "other.csv").replace(tmp_path / JOBS_FILE)
    with pytest.raises(TraceSchemaError, match="kind"):
        read_design_trace(tmp_path)


def test_malformed_rows_raise_schema_errors(trace, tmp_path):
    jobs_path, _ = write_design_trace(trace, tmp_path)
    text = jobs_path.read_text()
    jobs_path.write_text(text.replace(",2.5,", ",not-a-number,"))
    with pytest.raises(TraceSchemaError):
        read_design_trace(tmp_path)
    jobs_path.write_text(text.rstrip("\n") + ",extra\n")
    with pytest.raises(TraceSchemaError):
        read_design_trace(tmp_path)


def test_short_header_is_rejected(tmp_path):
    path = tmp_path / "series.csv"
    path.write_text("# seqcal 0\nseries_label,x_unit\n")
    with pytest.raises(TraceSchemaError):
        read_series(path)


def test_replicate_dir_naming(tmp_path):
    assert replicate_dir(tmp_path, 7).name == "replicate_007"


def test_perf_traces_written_and_read_back(tmp_path):
    scenario = PerfScenario(
        b=2,
        w=3,
        stop_count=11,
        curve=ProgressCurve.exponential(0.2, 100),
        acq_model=AcqTimeModel(a=0.1),
        run_model=RunTimeModel(kind=RunTimeKind.TRUNCATED_NORMAL, std=0.4, floor=0.05),
        replicates=3,
    )
    traces = run_scenario(scenario)
    write_perf_traces(scenario, traces, tmp_path)
    loaded_scenario, loaded = read_perf_traces(tmp_path)
    assert loaded_scenario == scenario
    assert [t.model_dump() for t in loaded] == [t.model_dump() for t in traces]


def test_series_and_summary_files(trace, tmp_path):
    series = [delta_series(trace)]
    write_series(series, tmp_path / "series.csv")
    assert read_series(tmp_path / "series.csv") == series

    rows = [
        SummaryRow(b=1, w=4, acq="hybrid", makespan_median=12.5, idle_avg=0.3, compute_hours=50.0),
        SummaryRow(
            b=2,
            w=4,
            acq="hybrid",
            makespan_median=10.0,
            speedup=1.25,
            idle_avg=0.1,
            compute_hours=40.0,
            run_mean=10.0,
        ),
    ]
    write_summary(rows, tmp_path / "summary.csv", {"alpha": "0.1"})
    assert read_summary(tmp_path / "summary.csv") == rows
    assert read_header(tmp_path / "summary.csv")["alpha"] == "0.1"


def test_summary_with_wrong_columns(tmp_path):
    path = tmp_path / "summary.csv"
    path.write_text("#\n# kind: summary\n#\n#\n#\n#\n#\n#\nb,w\n1,2\n")
    with pytest.raises(TraceSchemaError, match="columns"):
        read_summary(path)


def test_manifest_lifecycle(tmp_path):
    seeds = [SeedTriple.for_replicate(0, 0)]
    manifest = start_manifest(tmp_path, "design", {"design": {"n": 5}}, seeds)
    on_disk = json.loads((tmp_path / "manifest.json").read_text())
    assert on_disk["status"] == "running"
    assert on_disk["finished_at"] is None

    artifact = tmp_path / "replicate_000" / "jobs.csv"
    artifact.parent.mkdir()
    artifact.write_text("")
    finish_manifest(manifest, tmp_path, [artifact])
    loaded = load_manifest(tmp_path)
    assert loaded.status == "complete"
    assert loaded.artifacts == ["replicate_000/jobs.csv"]
    assert loaded.seeds == seeds
    assert loaded.config == {"design": {"n": 5}}
    assert not list(tmp_path.glob("*.tmp"))


def test_load_manifest_errors(tmp_path):
    with pytest.raises(ConfigError):
        load_manifest(tmp_path)
    (tmp_path / "manifest.json").write_text("{}")
    with pytest.raises(ConfigError):
        load_manifest(tmp_path / "manifest.json")
