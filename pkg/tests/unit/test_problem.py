"""Tests for parameter spaces, calibration problems and uniform sampling."""

import math

import numpy as np
import pytest
from pydantic import ValidationError
from scipy.stats import qmc

from seqcal.core.errors import SimulatorError
from seqcal.core.models import ParameterSpace
from seqcal.core.problem import (
    CalibrationProblem,
    grid_points,
    in_box,
    log_prior,
    posterior_density,
    sample_uniform,
    unnormalized_posterior,
)


def test_space_rejects_inverted_bounds():
    """Test that lower must be strictly below upper on every axis."""
    with pytest.raises(ValidationError):
        ParameterSpace(lower=[0.0, 1.0], upper=[1.0, 1.0])
    with pytest.raises(ValidationError):
        ParameterSpace(lower=[0.0], upper=[1.0, 2.0])


def test_space_volume_and_contains(square):
    assert square.dims == 2
    assert square.volume == pytest.approx(4.0)
    assert square.contains([1.0, -1.0])
    assert not square.contains([1.0001, 0.0])
    assert not square.contains([0.0, 0.0, 0.0])


def test_sample_uniform_is_reproducible_and_inside(square):
    """Test that a fixed seed reproduces the same draws, all inside the box."""
    a = sample_uniform(square, 100, 42)
    b = sample_uniform(square, 100, 42)
    assert a.shape == (100, 2)
    np.testing.assert_array_equal(a, b)
    assert in_box(square, a).all()


def test_sample_uniform_rejects_empty(square):
    with pytest.raises(ValueError):
        sample_uniform(square, 0, 1)


def test_log_prior_inside_and_outside(quadratic_problem):
    assert log_prior(quadratic_problem, [0.0, 0.0]) == pytest.approx(-math.log(4.0))
    assert log_prior(quadratic_problem, [2.0, 0.0]) == -math.inf


def test_unnormalized_posterior_is_gaussian_times_prior(quadratic_problem):
    """Test p~(theta|y) = f_N(y; eta, sigma^2) / vol at a known point."""
    expected = math.exp(-0.5 * 0.5**2 / 0.1) / math.sqrt(2 * math.pi * 0.1) / 4.0
    assert unnormalized_posterior(quadratic_problem, [0.0, 0.0], 0.0) == pytest.approx(expected)
    assert unnormalized_posterior(quadratic_problem, [3.0, 0.0], 0.0) == 0.0


def test_posterior_density_matches_scalar(quadratic_problem, rng):
    thetas = rng.uniform(-1.5, 1.5, size=(20, 2))
    eta = np.array([quadratic_problem.simulator(t) for t in thetas])
    vector = posterior_density(quadratic_problem, thetas, eta)
    scalar = [unnormalized_posterior(quadratic_problem, t, e) for t, e in zip(thetas, eta)]
    np.testing.assert_allclose(vector, scalar, rtol=1e-12)


def test_evaluate_wraps_simulator_failures(square):
    """Test that raising and non-finite simulators surface as SimulatorError."""

    def broken(theta):
        raise RuntimeError("boom")

    failing = CalibrationProblem(space=square, simulator=broken, observation=0.0, noise_var=1.0)
    with pytest.raises(SimulatorError, match="boom"):
        failing.evaluate([0.0, 0.0])

    nan = CalibrationProblem(
        space=square, simulator=lambda t: float("nan"), observation=0.0, noise_var=1.0
    )
    with pytest.raises(SimulatorError) as info:
        nan.evaluate([0.5, 0.5])
    assert info.value.theta == [0.5, 0.5]


def test_noise_variance_must_be_positive(square):
    with pytest.raises(ValidationError):
        CalibrationProblem(space=square, simulator=lambda t: 0.0, observation=0.0, noise_var=0.0)


def test_grid_points_cover_box_edges(square):
    grid = grid_points(square, 5)
    assert grid.shape == (25, 2)
    assert grid.min() == -1.0 and grid.max() == 1.0


def test_posterior_peaks_where_eta_matches_observation(quadratic_problem):
    """Test that p~ as a function of eta is maximized at eta = y."""
    y = quadratic_problem.observation
    etas = y + np.linspace(-3.0, 3.0, 601)
    values = [unnormalized_posterior(quadratic_problem, [0.1, 0.1], e) for e in etas]
    assert etas[int(np.argmax(values))] == pytest.approx(y)
    peak = unnormalized_posterior(quadratic_problem, [0.1, 0.1], y)
    assert peak > unnormalized_posterior(quadratic_problem, [0.1, 0.1], y + 1e-3)
    assert peak > unnormalized_posterior(quadratic_problem, [0.1, 0.1], y - 1e-3)


def test_prior_integrates_to_one():
    """Test exp(log_prior) over a box four times larger than the parameter space."""
    space = ParameterSpace(lower=[0.0, -1.0], upper=[2.0, 3.0])
    problem = CalibrationProblem(space=space, simulator=lambda t: 0.0, observation=0.0, noise_var=1)
    outer_lower = np.array([-1.0, -3.0])
    outer_upper = np.array([3.0, 5.0])
    u = qmc.Sobol(d=2, scramble=True, seed=4).random_base2(14)
    points = qmc.scale(u, outer_lower, outer_upper)
    density = np.exp([log_prior(problem, p) for p in points])
    integral = float(np.prod(outer_upper - outer_lower)) * density.mean()
    assert integral == pytest.approx(1.0, abs=1e-2)
