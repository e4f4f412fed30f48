"""Desk-scale reproductions of the batch-size and acquisition comparisons."""

from pathlib import Path

import numpy as np
import pytest

from seqcal.core.config import DesignConfig, load_settings
from seqcal.core.models import AcquisitionKind, AcquisitionSpec
from seqcal.design import run_design
from seqcal.performance import run_scenario
from seqcal.service import engine_config, perf_cells, resolve_problem

SCENARIOS = Path(__file__).resolve().parents[2] / "config" / "scenarios"

pytestmark = pytest.mark.slow


def test_best_batch_size_shrinks_as_simulations_get_slower():
    """Test that the makespan-minimizing b is nonincreasing in the mean run time."""
    perf = load_settings(SCENARIOS / "batch_sweep.yaml").perf
    spans: dict[tuple[float, int], np.ndarray] = {}
    for scenario, reason in perf_cells(perf):
        assert scenario is not None, reason
        traces = run_scenario(scenario)
        spans[(scenario.run_model.mean, scenario.b)] = np.array([t.makespan for t in traces])

    means = sorted({mean for mean, _ in spans})
    batches = sorted({b for _, b in spans})
    monotone = 0
    for omega in range(perf.replicates):
        best = [min(batches, key=lambda b: (spans[(mean, b)][omega], b)) for mean in means]
        monotone += all(later <= earlier for earlier, later in zip(best, best[1:]))
    assert monotone >= 0.9 * perf.replicates


def final_metrics(problem: str, kind: AcquisitionKind, replicates: int = 10):
    config = DesignConfig(
        problem=problem,
        n0=10,
        n=200,
        replicates=replicates,
        acquisition=AcquisitionSpec(kind=kind),
        compute_mad=True,
    )
    resolved = resolve_problem(config)
    deltas, mads = [], []
    for replicate in range(replicates):
        trace = run_design(
            resolved.problem, engine_config(config, replicate, True), truth=resolved.truth
        )
        deltas.append(trace.stages[-1].delta_t)
        mads.append(trace.stages[-1].mad_t)
    return float(np.median(deltas)), float(np.median(mads))


@pytest.mark.parametrize("problem", ["holder", "easom"])
def test_hybrid_matches_exploitation_and_beats_random(problem):
    hybrid_delta, hybrid_mad = final_metrics(problem, AcquisitionKind.HYBRID)
    ei_delta, _ = final_metrics(problem, AcquisitionKind.EI)
    rnd_delta, _ = final_metrics(problem, AcquisitionKind.RND)
    assert hybrid_delta <= ei_delta
    assert hybrid_delta <= rnd_delta
    if problem == "easom":
        _, eivar_mad = final_metrics(problem, AcquisitionKind.EIVAR)
        assert hybrid_mad <= eivar_mad
