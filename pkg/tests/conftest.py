"""Pytest configuration and fixtures."""

import os

import numpy as np
import pytest
import structlog

from seqcal.core.models import (
    AcquisitionKind,
    AcquisitionSpec,
    EngineConfig,
    FitConfig,
    KernelParams,
    ParameterSpace,
    SeedTriple,
)
from seqcal.core.problem import CalibrationProblem
from seqcal.emulator import GpPosterior, build_posterior
from seqcal.testbed import TestProblem, make


@pytest.fixture(autouse=True)
def _isolated_env(monkeypatch, tmp_path):
    """Keep SEQCAL_* variables and .env files of the host out of every test."""
    for key in list(os.environ):
        if key.startswith("SEQCAL_"):
            monkeypatch.delenv(key)
    monkeypatch.chdir(tmp_path)


@pytest.fixture(autouse=True)
def _restore_structlog_config():
    """Undo structlog reconfiguration (e.g. CLI runs binding a temporary stderr)."""
    saved = structlog.get_config()
    yield
    structlog.configure(**saved)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def square():
    return ParameterSpace.box(-1.0, 1.0, 2)


@pytest.fixture
def quadratic_problem(square):
    """Cheap 2-d problem: eta = theta_1^2 + theta_2^2, y = 0.5."""
    return CalibrationProblem(
        space=square,
        simulator=lambda theta: float(theta[0] ** 2 + theta[1] ** 2),
        observation=0.5,
        noise_var=0.1,
        name="quadratic",
    )


@pytest.fixture
def sphere() -> TestProblem:
    return make("sphere")


@pytest.fixture
def small_gp(rng) -> GpPosterior:
    """GP on 8 points of the unit square with fixed hyperparameters."""
    X = rng.uniform(-1.0, 1.0, size=(8, 2))
    y = np.sin(3.0 * X[:, 0]) + X[:, 1] ** 2
    params = KernelParams(log_lengthscales=[0.5, 0.2], scale=1.3, nugget=1e-6)
    return build_posterior(X, y, params)


@pytest.fixture
def fast_fit():
    return FitConfig(n_starts=2, restart_every=5, max_iter=50)


@pytest.fixture
def make_engine_config(fast_fit):
    """Factory for small engine configs."""

    def factory(
        n: int = 6,
        b: int = 1,
        w: int = 1,
        kind: AcquisitionKind = AcquisitionKind.EI,
        n0: int = 5,
        seed: int = 3,
        replicate: int = 0,
        **extra,
    ) -> EngineConfig:
        return EngineConfig(
            n0=n0,
            n=n,
            b=b,
            w=w,
            acquisition=AcquisitionSpec(kind=kind, candidate_count=50, reference_count=30),
            fit=fast_fit,
            seeds=SeedTriple.for_replicate(seed, replicate),
            replicate_id=replicate,
            **extra,
        )

    return factory
