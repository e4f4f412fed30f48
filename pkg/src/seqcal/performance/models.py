"""Input and output models of the Monte Carlo performance model."""

import math
from collections.abc import Sequence
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.stats import norm

from seqcal.core.errors import InfeasibleTargetError

_SEED_MASK = (1 << 64) - 1


class CurveKind(str, Enum):
    """How calibration error decays with completed evaluations."""

    EXPONENTIAL = "exponential"
    EMPIRICAL = "empirical"
    PIECEWISE_BATCH = "piecewise-batch"


class ProgressCurve(BaseModel):
    """Calibration error as a function of completed evaluations."""

    model_config = ConfigDict(frozen=True)

    kind: CurveKind
    n: int = Field(..., ge=1, description="evaluation budget the curve is defined on")
    exponent: float | None = Field(default=None, gt=0)
    table: list[tuple[int, float]] = Field(default_factory=list)
    base: "ProgressCurve | None" = None
    batch_size: int | None = Field(default=None, ge=1)

    @model_validator(mode="after")
    def _check_kind(self) -> "ProgressCurve":
        if self.kind is CurveKind.EXPONENTIAL and self.exponent is None:
            raise ValueError("exponential curve needs an exponent")
        if self.kind is CurveKind.EMPIRICAL:
            if not self.table:
                raise ValueError("empirical curve needs a non-empty table")
            js = [j for j, _ in self.table]
            errors = [e for _, e in self.table]
            if any(b <= a for a, b in zip(js, js[1:])):
                raise ValueError("table evaluation counts must be strictly increasing")
            if any(not 0.0 <= e <= 1.0 for e in errors):
                raise ValueError("table errors must lie in [0, 1]")
            if any(b > a for a, b in zip(errors, errors[1:])):
                raise ValueError("table errors must be nonincreasing")
            if js[0] < 0 or js[-1] > self.n:
                raise ValueError("table evaluation counts must lie in [0, n]")
        if self.kind is CurveKind.PIECEWISE_BATCH:
            if self.base is None or self.batch_size is None:
                raise ValueError("piecewise-batch curve needs a base curve and a batch size")
            if self.base.n != self.n:
                raise ValueError("piecewise-batch curve must share the base curve budget")
        return self

    @classmethod
    def exponential(cls, exponent: float, n: int) -> "ProgressCurve":
        return cls(kind=CurveKind.EXPONENTIAL, exponent=exponent, n=n)

    @classmethod
    def empirical(
        cls, table: Sequence[tuple[int, float]], n: int | None = None
    ) -> "ProgressCurve":
        rows = [(int(j), float(e)) for j, e in table]
        return cls(kind=CurveKind.EMPIRICAL, table=rows, n=n if n is not None else rows[-1][0])

    @classmethod
    def piecewise(cls, base: "ProgressCurve", batch_size: int) -> "ProgressCurve":
        """Hold ``base`` constant between stage boundaries of ``batch_size`` evaluations."""
        return cls(kind=CurveKind.PIECEWISE_BATCH, base=base, batch_size=batch_size, n=base.n)

    @classmethod
    def from_series(
        cls,
        evaluations: Sequence[float],
        errors: Sequence[float],
        n: int | None = None,
    ) -> "ProgressCurve":
        """Normalize a measured error series (e.g. delta_t) into an empirical curve.

        Errors are divided by the first value, clipped to [0, 1] and made
        nonincreasing with a running minimum.
        """
        if not errors:
            raise ValueError("cannot build a curve from an empty series")
        values = np.asarray(errors, dtype=float)
        scale = values[0] if values[0] > 0 else 1.0
        normalized = np.minimum.accumulate(np.clip(values / scale, 0.0, 1.0))
        table = [(int(j), float(e)) for j, e in zip(evaluations, normalized)]
        return cls.empirical(table, n=n)


def error_at(curve: ProgressCurve, j: int) -> float:
    """Calibration error after ``j`` completed evaluations."""
    if not 0 <= j <= curve.n:
        raise ValueError(f"evaluation index {j} outside [0, {curve.n}]")
    match curve.kind:
        case CurveKind.EXPONENTIAL:
            assert curve.exponent is not None
            return 1.0 - (j / curve.n) ** curve.exponent
        case CurveKind.EMPIRICAL:
            error = 1.0
            for count, value in curve.table:
                if count > j:
                    break
                error = value
            return error
        case CurveKind.PIECEWISE_BATCH:
            assert curve.base is not None and curve.batch_size is not None
            b = curve.batch_size
            return error_at(curve.base, b * (j // b))
    raise ValueError(f"unknown curve kind {curve.kind}")


def evals_to_accuracy(curve: ProgressCurve, alpha: float) -> int:
    """Smallest evaluation count whose error is at most ``alpha`` (n_k(b, alpha))."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must lie in (0, 1) (got {alpha})")
    match curve.kind:
        case CurveKind.EXPONENTIAL:
            assert curve.exponent is not None
            j = max(1, math.ceil(curve.n * (1.0 - alpha) ** (1.0 / curve.exponent)))
            # absorb floating point error in the closed form
            while j > 1 and error_at(curve, j - 1) <= alpha:
                j -= 1
            while j <= curve.n and error_at(curve, j) > alpha:
                j += 1
            if j > curve.n:
                raise InfeasibleTargetError(f"curve never reaches alpha={alpha} within n={curve.n}")
            return j
        case CurveKind.EMPIRICAL:
            for count, value in curve.table:
                if count >= 1 and value <= alpha:
                    return count
            raise InfeasibleTargetError(
                f"empirical curve never reaches alpha={alpha} (min error {curve.table[-1][1]})"
            )
        case CurveKind.PIECEWISE_BATCH:
            assert curve.base is not None and curve.batch_size is not None
            b = curve.batch_size
            stop = math.ceil(evals_to_accuracy(curve.base, alpha) / b) * b
            if stop > curve.n:
                raise InfeasibleTargetError(
                    f"batch size {b} needs {stop} evaluations, beyond n={curve.n}"
                )
            return stop
    raise ValueError(f"unknown curve kind {curve.kind}")


class CurveConfig(BaseModel):
    """Progress curve family for a batch-size grid."""

    model_config = ConfigDict(extra="forbid")

    kind: CurveKind = CurveKind.EXPONENTIAL
    n: int = Field(default=1280, ge=1)
    exponent: float = Field(default=0.1, gt=0)
    exponents: dict[int, float] = Field(default_factory=dict, description="per batch size")
    exponent_step: float | None = Field(
        default=None, description="added once per ascending batch size after the first"
    )
    table: list[tuple[int, float]] = Field(default_factory=list)
    piecewise: bool = True

    def exponent_for(self, b: int, batch_sizes: Sequence[int] = ()) -> float:
        if b in self.exponents:
            return self.exponents[b]
        if self.exponent_step is not None:
            rank = sorted(set(batch_sizes) | {b}).index(b)
            return self.exponent + rank * self.exponent_step
        return self.exponent

    def curve_for(self, b: int, batch_sizes: Sequence[int] = ()) -> ProgressCurve:
        """Progress curve seen by a run with batch size ``b``."""
        if self.kind is CurveKind.EMPIRICAL:
            base = ProgressCurve.empirical(self.table, n=self.n)
        else:
            base = ProgressCurve.exponential(self.exponent_for(b, batch_sizes), self.n)
        if b > 1 and self.piecewise:
            return ProgressCurve.piecewise(base, b)
        return base


class AcqTimeKind(str, Enum):
    """Acquisition time model."""

    CONSTANT = "constant"
    LINEAR = "linear"
    QUADRATIC = "quadratic"
    MEASURED = "measured"


class AcqTimeModel(BaseModel):
    """Time the manager spends acquiring one batch.

    The first pick of stage t (job index 1 + b(t-1)) pays the kind's formula
    at j/n; the other b-1 picks pay ``tail``. Without a tail every pick pays
    the formula at its own index.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: AcqTimeKind = AcqTimeKind.CONSTANT
    a: float = Field(default=0.0, ge=0)
    b: float = Field(default=0.0, ge=0)
    c: float = Field(default=0.0, ge=0)
    tail: float | None = Field(default=None, ge=0)
    measured: list[float] = Field(default_factory=list, description="per-stage a(b, t)")

    @model_validator(mode="after")
    def _check_measured(self) -> "AcqTimeModel":
        if self.kind is AcqTimeKind.MEASURED:
            if not self.measured:
                raise ValueError("measured acquisition model needs recorded stage times")
            if any(v < 0 for v in self.measured):
                raise ValueError("measured acquisition times must be nonnegative")
        return self

    def per_pick(self, j: int, n: int) -> float:
        x = j / n
        match self.kind:
            case AcqTimeKind.CONSTANT:
                return self.a
            case AcqTimeKind.LINEAR:
                return self.a + self.b * x
            case AcqTimeKind.QUADRATIC:
                return self.a + self.b * x + self.c * x * x
        raise ValueError(f"per-pick time undefined for {self.kind.value} model")


def acq_time(model: AcqTimeModel, b: int, t: int, n: int) -> float:
    """Time a(b, t) to acquire the b parameter sets of stage ``t``."""
    if t < 1:
        raise ValueError(f"stage index must be >= 1 (got {t})")
    if model.kind is AcqTimeKind.MEASURED:
        if t <= len(model.measured):
            return model.measured[t - 1]
        return float(np.mean(model.measured))
    first = 1 + b * (t - 1)
    if model.tail is not None:
        return model.per_pick(first, n) + (b - 1) * model.tail
    return sum(model.per_pick(first + i, n) for i in range(b))


class RunTimeKind(str, Enum):
    """Simulation run time model."""

    CONSTANT = "constant"
    TRUNCATED_NORMAL = "truncated-normal"
    EMPIRICAL = "empirical"


class RunTimeModel(BaseModel):
    """Per-job simulation run times s_{omega, j}.

    Draws come from a Philox stream keyed on (seed, omega); job j reads the
    j-th uniform of that stream, so values do not depend on execution order.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: RunTimeKind = RunTimeKind.CONSTANT
    mean: float = Field(default=1.0, gt=0)
    std: float = Field(default=0.0, ge=0)
    floor: float = Field(default=0.0, ge=0)
    samples: list[float] = Field(default_factory=list, description="observed run times")
    seed: int = 0

    @model_validator(mode="after")
    def _check_samples(self) -> "RunTimeModel":
        if self.kind is RunTimeKind.EMPIRICAL:
            if not self.samples:
                raise ValueError("empirical run-time model needs observed samples")
            if any(v <= 0 for v in self.samples):
                raise ValueError("observed run times must be positive")
        return self

    def with_mean(self, mean: float, std_ratio: float | None = None) -> "RunTimeModel":
        std = self.std if std_ratio is None else std_ratio * mean
        return self.model_copy(update={"mean": mean, "std": std})

    def _uniforms(self, replicate: int, count: int) -> np.ndarray:
        key = ((self.seed & _SEED_MASK) << 64) | (replicate & _SEED_MASK)
        return np.random.Generator(np.random.Philox(key=key)).random(count)

    def analytic_mean(self) -> float:
        """E[max(floor, X)] for X ~ N(mean, std^2); the constant value otherwise."""
        if self.kind is RunTimeKind.EMPIRICAL:
            return float(np.mean(self.samples))
        if self.kind is RunTimeKind.CONSTANT:
            return self.mean
        if self.std == 0:
            return max(self.floor, self.mean)
        z = (self.floor - self.mean) / self.std
        return float(
            self.floor * norm.cdf(z) + self.mean * norm.sf(z) + self.std * norm.pdf(z)
        )


def sample_runtimes(model: RunTimeModel, replicate: int, count: int) -> np.ndarray:
    """Run times of jobs 1..count for replicate ``replicate``."""
    if count < 0:
        raise ValueError(f"count must be >= 0 (got {count})")
    match model.kind:
        case RunTimeKind.CONSTANT:
            return np.full(count, model.mean)
        case RunTimeKind.TRUNCATED_NORMAL:
            if model.std == 0:
                return np.full(count, max(model.floor, model.mean))
            draws = model.mean + model.std * norm.ppf(model._uniforms(replicate, count))
            return np.maximum(model.floor, draws)
        case RunTimeKind.EMPIRICAL:
            pool = np.asarray(model.samples, dtype=float)
            index = np.floor(model._uniforms(replicate, count) * len(pool)).astype(int)
            return pool[np.minimum(index, len(pool) - 1)]
    raise ValueError(f"unknown run-time kind {model.kind}")


def sample_runtime(model: RunTimeModel, replicate: int, j: int) -> float:
    """Run time s_{omega, j} of job ``j`` (1-based)."""
    if j < 1:
        raise ValueError(f"job index must be >= 1 (got {j})")
    return float(sample_runtimes(model, replicate, j)[j - 1])


class PerfScenario(BaseModel):
    """Inputs of one performance-model cell."""

    model_config = ConfigDict(frozen=True)

    b: int = Field(..., ge=1)
    w: int = Field(..., ge=1)
    label: str = "hybrid"
    stop_count: int = Field(..., ge=1, description="n_k(b, alpha)")
    curve: ProgressCurve
    acq_model: AcqTimeModel = Field(default_factory=AcqTimeModel)
    run_model: RunTimeModel = Field(default_factory=RunTimeModel)
    replicates: int = Field(default=30, ge=1)

    @model_validator(mode="after")
    def _check_sizes(self) -> "PerfScenario":
        if not self.b <= self.w <= self.stop_count:
            raise ValueError(
                f"need b <= w <= n_k (got b={self.b}, w={self.w}, n_k={self.stop_count})"
            )
        return self

    @classmethod
    def for_target(
        cls,
        b: int,
        w: int,
        curve: ProgressCurve,
        alpha: float,
        acq_model: AcqTimeModel,
        run_model: RunTimeModel,
        replicates: int = 30,
        label: str = "hybrid",
    ) -> "PerfScenario":
        """Scenario whose stop count is the evaluations ``curve`` needs to reach ``alpha``."""
        return cls(
            b=b,
            w=w,
            label=label,
            stop_count=evals_to_accuracy(curve, alpha),
            curve=curve,
            acq_model=acq_model,
            run_model=run_model,
            replicates=replicates,
        )

    @property
    def budget(self) -> int:
        return self.curve.n

    @property
    def cell_name(self) -> str:
        return f"b{self.b}_w{self.w}_s{self.run_model.mean:g}"


class PerfTrace(BaseModel):
    """Job and stage end times of one simulated replicate.

    ``job_end[j-1]`` is c^J of job j; ``stage_end[t]`` is c^S_t with
    ``stage_end[0] == 0``.
    """

    replicate: int
    b: int
    w: int
    job_end: list[float] = Field(default_factory=list)
    job_stage: list[int] = Field(default_factory=list, description="creating stage, 0 = first wave")
    consumed_stage: list[int | None] = Field(default_factory=list)
    stage_end: list[float] = Field(default_factory=lambda: [0.0])
    stage_nt: list[int] = Field(default_factory=list)
    pending_sizes: list[int] = Field(default_factory=list)

    @property
    def stages(self) -> int:
        return len(self.stage_end) - 1

    @property
    def makespan(self) -> float:
        """Latest of every job end and the final stage end."""
        return max([*self.job_end, self.stage_end[-1]])
