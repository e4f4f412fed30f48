"""Calibration problems, uniform priors and candidate sampling."""

import math
from collections.abc import Callable

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.stats import norm

from seqcal.core.errors import SimulatorError
from seqcal.core.models import ParameterSpace

Simulator = Callable[[np.ndarray], float]
BatchSimulator = Callable[[np.ndarray], np.ndarray]


class CalibrationProblem(BaseModel):
    """Simulator, uniform prior box, observation y and known noise variance."""

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    space: ParameterSpace
    simulator: Simulator
    observation: float
    noise_var: float = Field(..., gt=0)
    name: str = "custom"
    batch_simulator: BatchSimulator | None = None

    @property
    def prior_density(self) -> float:
        """Uniform density 1/vol(Theta) inside the box."""
        return 1.0 / self.space.volume

    def evaluate(self, theta: np.ndarray | list[float]) -> float:
        """Run the simulator once; non-finite outputs are failures."""
        point = np.asarray(theta, dtype=float)
        try:
            value = float(self.simulator(point))
        except SimulatorError:
            raise
        except Exception as e:
            raise SimulatorError(f"simulator raised: {e}", theta=point.tolist()) from e
        if not math.isfinite(value):
            raise SimulatorError(f"non-finite simulator output {value}", theta=point.tolist())
        return value

    def evaluate_many(self, thetas: np.ndarray) -> np.ndarray:
        """Evaluate a stack of parameter vectors (rows)."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        if self.batch_simulator is not None:
            values = np.asarray(self.batch_simulator(thetas), dtype=float)
            if not np.all(np.isfinite(values)):
                raise SimulatorError("non-finite simulator output in batch")
            return values
        return np.array([self.evaluate(row) for row in thetas])


def sample_uniform(
    space: ParameterSpace,
    count: int,
    seed: int | np.random.Generator,
) -> np.ndarray:
    """Draw ``count`` i.i.d. uniform points from the box as a (count, p) array."""
    if count < 1:
        raise ValueError(f"count must be >= 1 (got {count})")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    return rng.uniform(space.lower_array, space.upper_array, size=(count, space.dims))


def log_prior(problem: CalibrationProblem, theta: np.ndarray | list[float]) -> float:
    """-log vol(Theta) inside the box, -inf outside."""
    if not problem.space.contains(theta):
        return -math.inf
    return -math.log(problem.space.volume)


def in_box(space: ParameterSpace, thetas: np.ndarray) -> np.ndarray:
    """Row-wise box membership."""
    thetas = np.atleast_2d(thetas)
    return np.all((thetas >= space.lower_array) & (thetas <= space.upper_array), axis=1)


def unnormalized_posterior(
    problem: CalibrationProblem,
    theta: np.ndarray | list[float],
    eta_value: float,
) -> float:
    """Gaussian likelihood of y given eta times the uniform prior."""
    if not problem.space.contains(theta):
        return 0.0
    likelihood = norm.pdf(problem.observation, loc=eta_value, scale=math.sqrt(problem.noise_var))
    return float(likelihood) * problem.prior_density


def posterior_density(
    problem: CalibrationProblem,
    thetas: np.ndarray,
    eta_values: np.ndarray,
) -> np.ndarray:
    """Vectorized unnormalized posterior for rows of ``thetas``."""
    likelihood = norm.pdf(
        problem.observation, loc=np.asarray(eta_values), scale=math.sqrt(problem.noise_var)
    )
    return np.where(in_box(problem.space, thetas), likelihood * problem.prior_density, 0.0)


def grid_points(space: ParameterSpace, per_axis: int) -> np.ndarray:
    """Uniform tensor grid including the box edges, as rows."""
    axes = [np.linspace(lo, hi, per_axis) for lo, hi in zip(space.lower, space.upper)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)
