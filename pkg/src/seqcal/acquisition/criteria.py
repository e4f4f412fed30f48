"""Acquisition criteria over finite candidate lists.

Every criterion is expressed so that the selected candidate is the argmin:
PI is negated, EI is scored by its expected unimprovement.
"""

import math
from collections.abc import Sequence

import numpy as np
from scipy.stats import norm

from seqcal.core.models import AcquisitionKind, AcquisitionSpec, HybridOrder
from seqcal.core.problem import CalibrationProblem
from seqcal.emulator.gp import GpPosterior

# below this |sigma^2 + s^2 - tau^2| the second EIVAR term is dropped
DEGENERATE_EPS = 1e-12
_TWO_SQRT_PI = 2.0 * math.sqrt(math.pi)


def _residual_scale(
    gp: GpPosterior, problem: CalibrationProblem, thetas: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    mean, var = gp.predict_many(thetas)
    return problem.observation - mean, np.sqrt(problem.noise_var + var)


def pi_values(residual: np.ndarray, scale: np.ndarray, delta: float) -> np.ndarray:
    """Phi((delta - r)/u) - Phi((-delta - r)/u)."""
    upper = norm.cdf((delta - residual) / scale)
    lower = norm.cdf((-delta - residual) / scale)
    return np.clip(upper - lower, 0.0, 1.0)


def unimprovement_values(residual: np.ndarray, scale: np.ndarray, delta: float) -> np.ndarray:
    """E[max(e - delta, 0)] + E[max(-e - delta, 0)] for e ~ N(r, u^2)."""
    a1 = (delta - residual) / scale
    a2 = (-delta - residual) / scale
    value = (
        (residual - delta) * norm.sf(a1)
        + scale * norm.pdf(a1)
        + (-delta - residual) * norm.cdf(a2)
        + scale * norm.pdf(a2)
    )
    return np.maximum(value, 0.0)


def prob_improvement(
    gp: GpPosterior,
    problem: CalibrationProblem,
    theta_star: np.ndarray | Sequence[float],
    delta: float,
) -> float:
    """Probability that evaluating theta* improves on the best loss delta."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0 (got {delta})")
    r, u = _residual_scale(gp, problem, np.asarray(theta_star, dtype=float)[None, :])
    return float(pi_values(r, u, delta)[0])


def expected_unimprovement(
    gp: GpPosterior,
    problem: CalibrationProblem,
    theta_star: np.ndarray | Sequence[float],
    delta: float,
) -> float:
    """Expected amount by which |y - eta(theta*)| exceeds delta."""
    if delta < 0:
        raise ValueError(f"delta must be >= 0 (got {delta})")
    r, u = _residual_scale(gp, problem, np.asarray(theta_star, dtype=float)[None, :])
    return float(unimprovement_values(r, u, delta)[0])


def eivar_terms(
    gp: GpPosterior,
    problem: CalibrationProblem,
    candidates: np.ndarray,
    theta_ref: np.ndarray,
) -> np.ndarray:
    """Per-reference EIVAR summands, shape (len(theta_ref), len(candidates)).

    Each entry is the expected posterior variance of the unnormalized
    posterior at a reference point after a hypothetical evaluation at the
    candidate.
    """
    candidates = np.atleast_2d(np.asarray(candidates, dtype=float))
    theta_ref = np.atleast_2d(np.asarray(theta_ref, dtype=float))
    if theta_ref.shape[0] == 0:
        raise ValueError("reference set must not be empty")
    sigma2 = problem.noise_var
    y = problem.observation

    mean_ref, var_ref = gp.predict_many(theta_ref)
    _, var_cand = gp.predict_many(candidates)
    cov = gp.kernel(theta_ref, candidates) - gp.whiten(theta_ref).T @ gp.whiten(candidates)
    tau2 = cov * cov / (var_cand + gp.nugget)[None, :]

    first = norm.pdf(y, loc=mean_ref, scale=np.sqrt(sigma2 / 2.0 + var_ref)) / (
        _TWO_SQRT_PI * math.sqrt(sigma2)
    )
    spread = sigma2 + var_ref[:, None]
    gap = np.abs(spread - tau2)
    degenerate = gap < DEGENERATE_EPS
    second = norm.pdf(
        y, loc=mean_ref[:, None], scale=np.sqrt((spread + tau2) / 2.0)
    ) / (_TWO_SQRT_PI * np.sqrt(np.where(degenerate, 1.0, gap)))
    second = np.where(degenerate, 0.0, second)
    return problem.prior_density**2 * (first[:, None] - second)


def eivar_values(
    gp: GpPosterior,
    problem: CalibrationProblem,
    candidates: np.ndarray,
    theta_ref: np.ndarray,
) -> np.ndarray:
    """EIVAR criterion for every candidate (mean over the reference set)."""
    return np.mean(eivar_terms(gp, problem, candidates, theta_ref), axis=0)


def eivar(
    gp: GpPosterior,
    problem: CalibrationProblem,
    theta_star: np.ndarray | Sequence[float],
    theta_ref: np.ndarray,
) -> float:
    candidate = np.asarray(theta_star, dtype=float)[None, :]
    return float(eivar_values(gp, problem, candidate, theta_ref)[0])


def hybrid_dispatch(stage: int, order: HybridOrder = HybridOrder.EIVAR_EVEN) -> AcquisitionKind:
    """EIVAR on the stage parity named by ``order``, EI otherwise."""
    if stage < 1:
        raise ValueError(f"stage must be >= 1 (got {stage})")
    eivar_parity = 0 if order is HybridOrder.EIVAR_EVEN else 1
    return AcquisitionKind.EIVAR if stage % 2 == eivar_parity else AcquisitionKind.EI


def resolve_kind(spec: AcquisitionSpec, stage: int) -> AcquisitionKind:
    """Criterion actually used at ``stage``."""
    if spec.kind is AcquisitionKind.HYBRID:
        return hybrid_dispatch(stage, spec.hybrid_order)
    return spec.kind


def acquisition_values(
    kind: AcquisitionKind,
    gp: GpPosterior,
    problem: CalibrationProblem,
    candidates: np.ndarray,
    delta: float,
    theta_ref: np.ndarray | None = None,
) -> np.ndarray:
    """Values to minimize over ``candidates``."""
    match kind:
        case AcquisitionKind.PI:
            r, u = _residual_scale(gp, problem, candidates)
            return -pi_values(r, u, delta)
        case AcquisitionKind.EI:
            r, u = _residual_scale(gp, problem, candidates)
            return unimprovement_values(r, u, delta)
        case AcquisitionKind.EIVAR:
            if theta_ref is None:
                raise ValueError("EIVAR needs a reference set")
            return eivar_values(gp, problem, candidates, theta_ref)
    raise ValueError(f"{kind.value} has no acquisition surface")


def score_candidates(
    spec: AcquisitionSpec,
    gp: GpPosterior,
    problem: CalibrationProblem,
    stage: int,
    candidates: np.ndarray,
    delta: float,
    theta_ref: np.ndarray | None = None,
    rng: np.random.Generator | None = None,
) -> int:
    """Index of the selected candidate; ties go to the lowest index."""
    candidates = np.atleast_2d(candidates)
    if candidates.shape[0] == 0:
        raise ValueError("candidate list must not be empty")
    kind = resolve_kind(spec, stage)
    if kind is AcquisitionKind.RND:
        if rng is None:
            raise ValueError("RND selection needs an explicit generator")
        return int(rng.integers(candidates.shape[0]))
    values = acquisition_values(kind, gp, problem, candidates, delta, theta_ref)
    values = np.where(np.isnan(values), np.inf, values)
    return int(np.argmin(values))
