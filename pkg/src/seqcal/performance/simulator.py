"""Monte Carlo performance model: stage-by-stage replay of a manager/worker design."""

import heapq
import math
from concurrent.futures import ThreadPoolExecutor

import structlog

from seqcal.performance.models import PerfScenario, PerfTrace, acq_time, sample_runtimes

logger = structlog.get_logger()


def simulate(scenario: PerfScenario, replicate: int) -> PerfTrace:
    """Simulate one replicate.

    Starts with w jobs pending. Each stage waits for the b-th earliest pending
    completion (ties by job id), spends a(b, t) acquiring, removes the b
    completed jobs and submits b new ones. Stops once n_t >= n_k.
    """
    b, w, stop = scenario.b, scenario.w, scenario.stop_count
    created = w + max(0, math.ceil((stop - w) / b)) * b
    runtimes = sample_runtimes(scenario.run_model, replicate, created)

    job_end = [float(s) for s in runtimes[:w]]
    job_stage = [0] * w
    consumed_stage: list[int | None] = [None] * w
    pending = [(c, j) for j, c in enumerate(job_end, start=1)]
    heapq.heapify(pending)

    stage_end = [0.0]
    stage_nt = [w]
    pending_sizes = [len(pending)]
    n_t = w
    t = 0
    while n_t < stop:
        t += 1
        completed = [heapq.heappop(pending) for _ in range(b)]
        start = max(stage_end[-1], completed[-1][0])
        end = start + acq_time(scenario.acq_model, b, t, scenario.budget)
        for _, j in completed:
            consumed_stage[j - 1] = t
        for i in range(1, b + 1):
            j = n_t + i
            c = end + float(runtimes[j - 1])
            job_end.append(c)
            job_stage.append(t)
            consumed_stage.append(None)
            heapq.heappush(pending, (c, j))
        n_t += b
        stage_end.append(end)
        stage_nt.append(n_t)
        pending_sizes.append(len(pending))

    # jobs past n_k only come from the last stage's overshoot
    trace = PerfTrace(
        replicate=replicate,
        b=b,
        w=w,
        job_end=job_end[:stop],
        job_stage=job_stage[:stop],
        consumed_stage=consumed_stage[:stop],
        stage_end=stage_end,
        stage_nt=stage_nt,
        pending_sizes=pending_sizes,
    )
    logger.debug(
        "perf_replicate_finished",
        b=b,
        w=w,
        replicate=replicate,
        stages=t,
        makespan=trace.makespan,
    )
    return trace


def run_scenario(scenario: PerfScenario, jobs: int = 1) -> list[PerfTrace]:
    """Simulate every replicate of ``scenario``; results are ordered by replicate."""
    replicates = range(scenario.replicates)
    if jobs <= 1:
        traces = [simulate(scenario, omega) for omega in replicates]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            traces = list(executor.map(lambda omega: simulate(scenario, omega), replicates))
    logger.info(
        "perf_cell_finished",
        cell=scenario.cell_name,
        label=scenario.label,
        replicates=scenario.replicates,
        stop_count=scenario.stop_count,
    )
    return traces
