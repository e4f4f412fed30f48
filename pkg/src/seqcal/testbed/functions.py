"""Synthetic calibration problems with known posteriors."""

import math
from collections.abc import Callable, Sequence
from enum import Enum

import numpy as np
from pydantic import BaseModel, ConfigDict
from scipy import ndimage

from seqcal.core.models import ParameterSpace
from seqcal.core.problem import CalibrationProblem, grid_points, posterior_density

VectorizedSimulator = Callable[[np.ndarray], np.ndarray]


class TestName(str, Enum):
    """Built-in test problems."""

    __test__ = False

    HIMMELBLAU = "himmelblau"
    HOLDER = "holder"
    EASOM = "easom"
    SPHERE = "sphere"
    MATYAS = "matyas"
    ACKLEY = "ackley"


def himmelblau(thetas: np.ndarray) -> np.ndarray:
    t1, t2 = thetas[:, 0], thetas[:, 1]
    return (t1**2 + t2 - 11.0) ** 2 + (t1 + t2**2 - 7.0) ** 2


def holder(thetas: np.ndarray) -> np.ndarray:
    t1, t2 = thetas[:, 0], thetas[:, 1]
    radial = np.exp(np.abs(1.0 - np.sqrt(t1**2 + t2**2) / math.pi))
    return -np.abs(np.sin(t1) * np.cos(t2) * radial)


def easom(thetas: np.ndarray) -> np.ndarray:
    t1, t2 = thetas[:, 0], thetas[:, 1]
    return -np.cos(t1) * np.cos(t2) * np.exp(-((t1 - math.pi) ** 2 + (t2 - math.pi) ** 2))


def sphere(thetas: np.ndarray) -> np.ndarray:
    return np.sum(thetas**2, axis=1)


def matyas(thetas: np.ndarray) -> np.ndarray:
    t1, t2 = thetas[:, 0], thetas[:, 1]
    return 0.26 * (t1**2 + t2**2) - 0.48 * t1 * t2


def ackley(thetas: np.ndarray) -> np.ndarray:
    t1, t2 = thetas[:, 0], thetas[:, 1]
    return (
        -20.0 * np.exp(-0.2 * np.sqrt(0.5 * (t1**2 + t2**2)))
        - np.exp(0.5 * (np.cos(2.0 * math.pi * t1) + np.cos(2.0 * math.pi * t2)))
        + math.e
        + 20.0
    )


# name -> (simulator, box half-width, y, sigma^2)
_CATALOG: dict[TestName, tuple[VectorizedSimulator, float, float, float]] = {
    TestName.HIMMELBLAU: (himmelblau, 5.0, 1.0, 1.0),
    TestName.HOLDER: (holder, 10.0, -19.2085, 50.0),
    TestName.EASOM: (easom, 10.0, -1.0, 10.0),
    TestName.SPHERE: (sphere, 5.0, 0.0, 10.0),
    TestName.MATYAS: (matyas, 10.0, 0.0, 10.0),
    TestName.ACKLEY: (ackley, 5.0, 0.0, 10.0),
}


class TestProblem(BaseModel):
    """A named built-in problem."""

    model_config = ConfigDict(frozen=True)
    __test__ = False

    name: TestName
    problem: CalibrationProblem


def names() -> list[str]:
    return [name.value for name in TestName]


def _scalar(function: VectorizedSimulator) -> Callable[[np.ndarray], float]:
    def simulate(theta: np.ndarray) -> float:
        return float(function(np.asarray(theta, dtype=float)[None, :])[0])

    return simulate


def make(name: str | TestName) -> TestProblem:
    """Build a test problem with its published bounds, observation and noise variance."""
    try:
        key = TestName(name)
    except ValueError:
        choices = ", ".join(names())
        raise ValueError(f"unknown test problem {name!r}; choose from {choices}") from None
    function, half_width, y, sigma2 = _CATALOG[key]
    problem = CalibrationProblem(
        space=ParameterSpace.box(-half_width, half_width, 2),
        simulator=_scalar(function),
        batch_simulator=function,
        observation=y,
        noise_var=sigma2,
        name=key.value,
    )
    return TestProblem(name=key, problem=problem)


def true_unnormalized_posterior(test: TestProblem, theta: np.ndarray | Sequence[float]) -> float:
    """Exact unnormalized posterior p~(theta | y) from the closed-form simulator."""
    point = np.asarray(theta, dtype=float)
    if not test.problem.space.contains(point):
        return 0.0
    eta = test.problem.evaluate_many(point[None, :])
    return float(posterior_density(test.problem, point[None, :], eta)[0])


def true_posterior_on(test: TestProblem, thetas: np.ndarray) -> np.ndarray:
    """Vectorized exact unnormalized posterior at the rows of ``thetas``."""
    thetas = np.atleast_2d(thetas)
    return posterior_density(test.problem, thetas, test.problem.evaluate_many(thetas))


def count_modes(test: TestProblem, grid_size: int = 200, level: float = 0.5) -> int:
    """Connected regions of the grid where the posterior exceeds ``level`` x its maximum."""
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1) (got {level})")
    grid = grid_points(test.problem.space, grid_size)
    density = true_posterior_on(test, grid).reshape(grid_size, grid_size)
    _, count = ndimage.label(density >= level * density.max())
    return int(count)
