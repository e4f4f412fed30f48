"""Core data models using Pydantic."""

from datetime import datetime
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class AcquisitionKind(str, Enum):
    """Acquisition criterion."""

    PI = "pi"
    EI = "ei"
    EIVAR = "eivar"
    HYBRID = "hybrid"
    RND = "rnd"


class LiarRule(str, Enum):
    """Constant used for pending picks while a batch is built."""

    MEAN = "mean"
    MIN = "min"
    MAX = "max"


class HybridOrder(str, Enum):
    """Which stage parity runs EIVAR under HYBRID."""

    EIVAR_EVEN = "eivar-even"
    EIVAR_ODD = "eivar-odd"


class ParameterSpace(BaseModel):
    """Axis-aligned box of calibration parameters."""

    model_config = ConfigDict(frozen=True)

    lower: list[float] = Field(..., min_length=1)
    upper: list[float] = Field(..., min_length=1)

    @model_validator(mode="after")
    def _check_bounds(self) -> "ParameterSpace":
        if len(self.lower) != len(self.upper):
            raise ValueError("lower and upper must have the same length")
        for i, (lo, hi) in enumerate(zip(self.lower, self.upper)):
            if not lo < hi:
                raise ValueError(f"lower[{i}] must be < upper[{i}] (got {lo} >= {hi})")
        return self

    @classmethod
    def box(cls, low: float, high: float, dims: int) -> "ParameterSpace":
        return cls(lower=[low] * dims, upper=[high] * dims)

    @property
    def dims(self) -> int:
        return len(self.lower)

    @property
    def lower_array(self) -> np.ndarray:
        return np.asarray(self.lower, dtype=float)

    @property
    def upper_array(self) -> np.ndarray:
        return np.asarray(self.upper, dtype=float)

    @property
    def widths(self) -> np.ndarray:
        return self.upper_array - self.lower_array

    @property
    def volume(self) -> float:
        return float(np.prod(self.widths))

    def contains(self, theta: np.ndarray | list[float]) -> bool:
        """Closed-box membership."""
        point = np.asarray(theta, dtype=float)
        if point.shape != (self.dims,):
            return False
        return bool(np.all(point >= self.lower_array) and np.all(point <= self.upper_array))


class Sample(BaseModel):
    """A parameter vector and (once evaluated) its simulator output."""

    theta: list[float]
    output: float | None = None

    @property
    def evaluated(self) -> bool:
        return self.output is not None


class KernelParams(BaseModel):
    """Hyperparameters of the separable Matérn-1.5 kernel."""

    model_config = ConfigDict(frozen=True)

    log_lengthscales: list[float] = Field(..., min_length=1)
    scale: float = Field(..., gt=0, description="tau^2")
    nugget: float = Field(..., gt=0, description="upsilon")

    def to_vector(self) -> np.ndarray:
        """Optimizer coordinates (zeta, log tau^2, log upsilon)."""
        return np.concatenate(
            [np.asarray(self.log_lengthscales), [np.log(self.scale), np.log(self.nugget)]]
        )

    @classmethod
    def from_vector(cls, phi: np.ndarray) -> "KernelParams":
        return cls(
            log_lengthscales=[float(v) for v in phi[:-2]],
            scale=float(np.exp(phi[-2])),
            nugget=float(np.exp(phi[-1])),
        )


class AcquisitionSpec(BaseModel):
    """Acquisition settings for one design run."""

    kind: AcquisitionKind = AcquisitionKind.HYBRID
    candidate_count: int = Field(default=1000, ge=1)
    reference_count: int = Field(default=1000, ge=1)
    hybrid_order: HybridOrder = HybridOrder.EIVAR_EVEN
    liar: LiarRule = LiarRule.MEAN


class FitConfig(BaseModel):
    """GP hyperparameter fitting controls."""

    n_starts: int = Field(default=4, ge=1)
    restart_every: int = Field(default=10, ge=1)
    max_iter: int = Field(default=200, ge=1)
    nugget_floor: float = Field(default=1e-8, gt=0, description="relative to tau^2")


class SeedTriple(BaseModel):
    """Independent seeds for the initial design, candidate lists and everything else."""

    model_config = ConfigDict(frozen=True)

    init: int
    candidates: int
    rng: int

    @classmethod
    def for_replicate(cls, base_seed: int, replicate: int) -> "SeedTriple":
        state = np.random.SeedSequence([base_seed, replicate]).generate_state(3)
        return cls(init=int(state[0]), candidates=int(state[1]), rng=int(state[2]))


class EngineConfig(BaseModel):
    """Inputs of one sequential design run."""

    n0: int = Field(default=10, ge=2)
    n: int = Field(..., ge=1, description="evaluations beyond the initial design")
    b: int = Field(..., ge=1)
    w: int = Field(..., ge=1)
    acquisition: AcquisitionSpec = Field(default_factory=AcquisitionSpec)
    fit: FitConfig = Field(default_factory=FitConfig)
    seeds: SeedTriple
    replicate_id: int = 0
    compute_mad: bool = False
    mad_grid: int = Field(default=50, ge=2)
    record_timing: bool = True

    @model_validator(mode="after")
    def _check_sizes(self) -> "EngineConfig":
        if not self.b <= self.w:
            raise ValueError(f"batch size b={self.b} must not exceed worker count w={self.w}")
        if not self.w <= self.n:
            raise ValueError(f"worker count w={self.w} must not exceed budget n={self.n}")
        return self

    @property
    def synchronous(self) -> bool:
        return self.b == self.w


class JobRecord(BaseModel):
    """One simulator evaluation in a design run."""

    job_id: int
    stage: int = Field(..., description="stage that consumed the result; 0 for the initial design")
    theta: list[float]
    output: float
    submit_time: float | None = None
    complete_time: float | None = None


class StageRecord(BaseModel):
    """Per-stage bookkeeping of the design loop."""

    stage: int
    n_t: int = Field(..., description="jobs submitted beyond the initial design: min(w + t*b, n)")
    consumed: int = Field(..., ge=0, description="results consumed through this stage")
    acq_time: float | None = None
    delta_t: float
    mad_t: float | None = None
    criterion: str = ""
    pending: int = 0
    log_lengthscales: list[float] = Field(default_factory=list)
    scale: float | None = None
    nugget: float | None = None


class DesignTrace(BaseModel):
    """Time-stamped log of a design run."""

    problem: str
    observation: float
    config: EngineConfig
    jobs: list[JobRecord] = Field(default_factory=list)
    stages: list[StageRecord] = Field(default_factory=list)
    complete: bool = False

    @property
    def replicate_id(self) -> int:
        return self.config.replicate_id

    def jobs_through(self, stage: int) -> list[JobRecord]:
        """Jobs whose results were consumed at or before ``stage``."""
        return [job for job in self.jobs if job.stage <= stage]


class MetricSeries(BaseModel):
    """An aggregated (x, y) series with replicate quartiles."""

    label: str
    x_unit: str
    y_unit: str
    x: list[float] = Field(default_factory=list)
    y_median: list[float] = Field(default_factory=list)
    y_q1: list[float] = Field(default_factory=list)
    y_q3: list[float] = Field(default_factory=list)

    @field_validator("x")
    @classmethod
    def _strictly_increasing(cls, x: list[float]) -> list[float]:
        if any(b <= a for a, b in zip(x, x[1:])):
            raise ValueError("x must be strictly increasing")
        return x

    @model_validator(mode="after")
    def _same_lengths(self) -> "MetricSeries":
        n = len(self.x)
        if not len(self.y_median) == len(self.y_q1) == len(self.y_q3) == n:
            raise ValueError("series columns must have equal length")
        return self

    def points(self) -> list[tuple[float, float]]:
        return list(zip(self.x, self.y_median))


class RunManifest(BaseModel):
    """Everything needed to replay a CLI run."""

    command: str
    config: dict[str, Any] = Field(default_factory=dict)
    seeds: list[SeedTriple] = Field(default_factory=list)
    artifacts: list[str] = Field(default_factory=list)
    version: str
    status: str = "running"
    started_at: datetime = Field(default_factory=datetime.now)
    finished_at: datetime | None = None
