"""Tests for the stage-by-stage performance simulator."""

import pytest

from seqcal.performance import (
    AcqTimeModel,
    PerfScenario,
    ProgressCurve,
    RunTimeModel,
    acq_time,
    run_scenario,
    sample_runtimes,
    simulate,
)
from seqcal.performance.models import AcqTimeKind, RunTimeKind


def scenario(b, w, stop, acq=None, run=None, replicates=3):
    return PerfScenario(
        b=b,
        w=w,
        stop_count=stop,
        curve=ProgressCurve.exponential(0.1, 1280),
        acq_model=acq or AcqTimeModel(kind=AcqTimeKind.CONSTANT, a=0.5, tail=0.0),
        run_model=run
        or RunTimeModel(kind=RunTimeKind.TRUNCATED_NORMAL, mean=1.0, std=0.5, floor=0.1, seed=9),
        replicates=replicates,
    )


def event_oracle(sc, replicate):
    """Plain sorted-list replay: returns (job ends, stage ends)."""
    total = sc.w + -(-max(0, sc.stop_count - sc.w) // sc.b) * sc.b
    runs = sample_runtimes(sc.run_model, replicate, total)
    ends = {j: float(runs[j - 1]) for j in range(1, sc.w + 1)}
    pending = set(ends)
    stage_ends = [0.0]
    created = sc.w
    t = 0
    while created < sc.stop_count:
        t += 1
        ordered = sorted(pending, key=lambda j: (ends[j], j))
        done = ordered[: sc.b]
        start = max(stage_ends[-1], ends[done[-1]])
        finish = start + acq_time(sc.acq_model, sc.b, t, sc.budget)
        pending -= set(done)
        for _ in range(sc.b):
            created += 1
            ends[created] = finish + float(runs[created - 1])
            pending.add(created)
        stage_ends.append(finish)
    return [ends[j] for j in range(1, sc.stop_count + 1)], stage_ends


SMALL_POOLS = [
    (b, w, stop)
    for w in range(1, 9)
    for b in range(1, w + 1)
    for stop in sorted({w, 23, 40})
]


@pytest.mark.parametrize(("b", "w", "stop"), SMALL_POOLS)
def test_matches_independent_event_replay(b, w, stop):
    """Test job and stage end times bit-for-bit for every pool up to 8 workers."""
    sc = scenario(b, w, stop)
    for replicate in range(sc.replicates):
        trace = simulate(sc, replicate)
        job_end, stage_end = event_oracle(sc, replicate)
        assert trace.job_end == job_end
        assert trace.stage_end == stage_end


def test_synchronous_constant_stage_ends_and_makespan():
    """Test c^S_t = t(s + a) and makespan (n_k/b) s + (n_k/b - 1) a."""
    s, a, b = 2.0, 0.5, 4
    sc = scenario(
        b,
        b,
        40,
        acq=AcqTimeModel(kind=AcqTimeKind.CONSTANT, a=a, tail=0.0),
        run=RunTimeModel(kind=RunTimeKind.CONSTANT, mean=s),
    )
    trace = simulate(sc, 0)
    assert trace.stage_end == pytest.approx([t * (s + a) for t in range(10)])
    assert trace.makespan == pytest.approx(10 * s + 9 * a)
    assert len(trace.job_end) == 40


def test_asynchronous_stage_waits_for_bth_completion():
    sc = scenario(2, 5, 30)
    trace = simulate(sc, 1)
    for j, stage in enumerate(trace.consumed_stage):
        if stage is not None:
            assert trace.job_end[j] <= trace.stage_end[stage]
    for j, stage in enumerate(trace.job_stage):
        if stage > 0:
            runtime = sample_runtimes(sc.run_model, 1, j + 1)[j]
            assert trace.job_end[j] == pytest.approx(trace.stage_end[stage] + runtime)


def test_pending_set_is_conserved():
    """Test that every stage removes b completions and adds b submissions."""
    trace = simulate(scenario(3, 7, 50), 0)
    assert set(trace.pending_sizes) == {7}
    assert trace.stage_nt == [7 + 3 * t for t in range(trace.stages + 1)]
    assert trace.stage_end == sorted(trace.stage_end)


def test_constant_models_make_replicates_identical():
    sc = scenario(
        2,
        4,
        20,
        run=RunTimeModel(kind=RunTimeKind.CONSTANT, mean=1.0),
        replicates=5,
    )
    traces = run_scenario(sc)
    assert all(t.job_end == traces[0].job_end for t in traces)


def test_run_scenario_parallel_matches_serial():
    sc = scenario(2, 4, 25, replicates=4)
    serial = run_scenario(sc, jobs=1)
    parallel = run_scenario(sc, jobs=3)
    assert [t.model_dump() for t in serial] == [t.model_dump() for t in parallel]
    assert [t.replicate for t in parallel] == [0, 1, 2, 3]


def test_asynchronous_constant_stage_values():
    """Test b=1, w=2, s=1, a=0.5 against hand-derived order statistics."""
    sc = scenario(
        1,
        2,
        5,
        acq=AcqTimeModel(kind=AcqTimeKind.CONSTANT, a=0.5, tail=0.0),
        run=RunTimeModel(kind=RunTimeKind.CONSTANT, mean=1.0),
    )
    trace = simulate(sc, 0)
    assert trace.stage_end == [0.0, 1.5, 2.0, 3.0]
    assert trace.job_end == [1.0, 1.0, 2.5, 3.0, 4.0]
    assert trace.consumed_stage == [1, 2, 3, None, None]
