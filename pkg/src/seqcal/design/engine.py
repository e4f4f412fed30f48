"""Coordinator of the batched sequential design loop."""

import time
from collections.abc import Callable

import numpy as np
import structlog

from seqcal.acquisition import build_batch, resolve_kind
from seqcal.core.errors import DesignAborted, SimulatorError
from seqcal.core.models import (
    AcquisitionKind,
    DesignTrace,
    EngineConfig,
    JobRecord,
    KernelParams,
    Sample,
    StageRecord,
)
from seqcal.core.problem import CalibrationProblem, grid_points, sample_uniform
from seqcal.design.workers import Completion, WorkerPool
from seqcal.emulator import GpPosterior, estimated_posterior, fit

logger = structlog.get_logger()

TruePosterior = Callable[[np.ndarray], np.ndarray]


def initial_design(
    problem: CalibrationProblem,
    n0: int,
    seed: int | np.random.Generator,
) -> list[Sample]:
    """Draw ``n0`` points from the prior and evaluate them one after another."""
    if n0 < 2:
        raise ValueError(f"initial design needs n0 >= 2 (got {n0})")
    thetas = sample_uniform(problem.space, n0, seed)
    return [Sample(theta=row.tolist(), output=problem.evaluate(row)) for row in thetas]


def _uses_reference(kind: AcquisitionKind) -> bool:
    return kind in (AcquisitionKind.EIVAR, AcquisitionKind.HYBRID)


class _DesignRun:
    """Mutable state of one run; owned by the coordinator thread."""

    def __init__(
        self,
        problem: CalibrationProblem,
        config: EngineConfig,
        truth: TruePosterior | None,
    ):
        self.problem = problem
        self.config = config
        self.trace = DesignTrace(
            problem=problem.name, observation=problem.observation, config=config
        )
        self.inputs: list[list[float]] = []
        self.outputs: list[float] = []

        seeds = config.seeds
        self.init_rng = np.random.default_rng(seeds.init)
        self.candidate_rng = np.random.default_rng(seeds.candidates)
        ref_seq, fit_seq = np.random.SeedSequence(seeds.rng).spawn(2)
        self.fit_rng = np.random.default_rng(fit_seq)

        spec = config.acquisition
        self.theta_ref: np.ndarray | None = None
        if _uses_reference(spec.kind):
            self.theta_ref = sample_uniform(
                problem.space, spec.reference_count, np.random.default_rng(ref_seq)
            )

        self.mad_grid: np.ndarray | None = None
        self.mad_truth: np.ndarray | None = None
        if config.compute_mad:
            if truth is None:
                raise ValueError("MAD tracking needs the true posterior of the problem")
            self.mad_grid = grid_points(problem.space, config.mad_grid)
            self.mad_truth = np.asarray(truth(self.mad_grid), dtype=float)

    def timed(self, value: float) -> float | None:
        return value if self.config.record_timing else None

    def _record(self, job: JobRecord) -> None:
        self.trace.jobs.append(job)
        self.inputs.append(job.theta)
        self.outputs.append(job.output)

    def abort(self, message: str) -> DesignAborted:
        self.trace.complete = False
        logger.error(
            "design_run_aborted",
            problem=self.problem.name,
            replicate=self.config.replicate_id,
            jobs=len(self.trace.jobs),
            error=message,
        )
        return DesignAborted(message, self.trace)

    def run_initial(self) -> None:
        try:
            samples = initial_design(self.problem, self.config.n0, self.init_rng)
        except SimulatorError as e:
            raise self.abort(f"initial design failed: {e}") from e
        for i, sample in enumerate(samples, start=1):
            assert sample.output is not None
            self._record(JobRecord(job_id=i, stage=0, theta=sample.theta, output=sample.output))

    def consume(self, stage: int, completions: list[Completion], first_job: int) -> None:
        failed = next((c for c in completions if c.failed), None)
        if failed is not None:
            message = f"job {first_job + failed.job_id} failed: {failed.error}"
            raise self.abort(message) from failed.error
        for c in completions:
            assert c.output is not None
            self._record(
                JobRecord(
                    job_id=first_job + c.job_id,
                    stage=stage,
                    theta=c.theta.tolist(),
                    output=c.output,
                    submit_time=self.timed(c.submit_time),
                    complete_time=self.timed(c.complete_time),
                )
            )

    def emulate(self, stage: int, warm: KernelParams | None) -> GpPosterior:
        fresh = stage == 1 or stage % self.config.fit.restart_every == 0
        return fit(
            np.asarray(self.inputs),
            np.asarray(self.outputs),
            self.config.fit,
            self.fit_rng,
            warm_start=None if fresh else warm,
        )

    def delta(self) -> float:
        return float(np.min(np.abs(self.problem.observation - np.asarray(self.outputs))))

    def mad(self, gp: GpPosterior) -> float | None:
        if self.mad_grid is None or self.mad_truth is None:
            return None
        estimate = estimated_posterior(gp, self.problem, self.mad_grid)
        return float(np.mean(np.abs(self.mad_truth - estimate)))


def run_design(
    problem: CalibrationProblem,
    config: EngineConfig,
    truth: TruePosterior | None = None,
    clock: Callable[[], float] = time.monotonic,
) -> DesignTrace:
    """Run the batched sequential design until ``config.n`` evaluations are consumed.

    The initial design is evaluated first and does not count against ``n``.
    The first wave of ``w`` jobs is drawn from the prior; afterwards each
    stage takes the earliest min(b, pending) completions, refits the emulator
    on everything consumed so far and submits up to ``b`` new picks. Pass
    ``truth`` (the exact unnormalized posterior) to track MAD per stage.
    """
    run = _DesignRun(problem, config, truth)
    spec = config.acquisition
    logger.info(
        "design_run_started",
        problem=problem.name,
        replicate=config.replicate_id,
        acquisition=spec.kind.value,
        n=config.n,
        b=config.b,
        w=config.w,
    )
    run.run_initial()
    # pool job ids count from 0; trace ids continue after the initial design
    offset = config.n0 + 1

    with WorkerPool(problem.evaluate, config.w, clock=clock) as pool:
        wave = sample_uniform(problem.space, config.w, run.init_rng)
        for i, theta in enumerate(wave):
            pool.submit(i, theta)
        submitted = config.w
        consumed = 0
        stage = 0
        warm: KernelParams | None = None

        while consumed < config.n:
            stage += 1
            completions = pool.collect(min(config.b, pool.pending))
            run.consume(stage, completions, offset)
            consumed += len(completions)

            started = clock()
            gp = run.emulate(stage, warm)
            warm = gp.params
            delta = run.delta()
            new = min(config.b, config.n - submitted)
            kind = resolve_kind(spec, stage)
            if new > 0:
                batch = build_batch(
                    spec, gp, problem, stage, new, run.candidate_rng, delta, run.theta_ref
                )
                acq_time = clock() - started
                for theta in batch:
                    pool.submit(submitted, theta)
                    submitted += 1
            else:
                acq_time = clock() - started

            run.trace.stages.append(
                StageRecord(
                    stage=stage,
                    n_t=submitted,
                    consumed=consumed,
                    acq_time=run.timed(acq_time),
                    delta_t=delta,
                    mad_t=run.mad(gp),
                    criterion=kind.value,
                    pending=pool.pending,
                    log_lengthscales=list(gp.params.log_lengthscales),
                    scale=gp.params.scale,
                    nugget=gp.params.nugget,
                )
            )
            logger.debug(
                "design_stage_completed",
                stage=stage,
                n_t=submitted,
                consumed=consumed,
                delta=delta,
                criterion=kind.value,
                pending=pool.pending,
            )

    run.trace.complete = True
    logger.info(
        "design_run_finished",
        problem=problem.name,
        replicate=config.replicate_id,
        stages=stage,
        delta=run.trace.stages[-1].delta_t,
    )
    return run.trace
