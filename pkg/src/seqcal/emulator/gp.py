"""Zero-mean GP emulator with a separable Matérn-1.5 kernel."""

import math
from collections.abc import Sequence

import numpy as np
import structlog
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve_triangular
from scipy.optimize import minimize
from scipy.stats import norm

from seqcal.core.errors import GpFitError
from seqcal.core.models import FitConfig, KernelParams, Sample
from seqcal.core.problem import CalibrationProblem, in_box

logger = structlog.get_logger()

# returned by the objective when K is not positive definite
_FAILED_NLML = 1e25
_LOG_2PI = math.log(2.0 * math.pi)


def _scaled_distances(A: np.ndarray, B: np.ndarray, log_lengthscales: np.ndarray) -> np.ndarray:
    """|a_l - b_l| e^{zeta_l} for every pair, shape (len(A), len(B), p)."""
    return np.abs(A[:, None, :] - B[None, :, :]) * np.exp(log_lengthscales)


def correlation_matrix(
    A: np.ndarray,
    B: np.ndarray,
    log_lengthscales: np.ndarray | Sequence[float],
) -> np.ndarray:
    """Matérn-1.5 correlations between the rows of ``A`` and ``B``."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    zeta = np.asarray(log_lengthscales, dtype=float)
    if A.shape[1] != B.shape[1] or A.shape[1] != zeta.shape[0]:
        raise ValueError(
            f"dimension mismatch: {A.shape[1]}, {B.shape[1]} and {zeta.shape[0]} lengthscales"
        )
    R = _scaled_distances(A, B, zeta)
    return np.prod(1.0 + R, axis=2) * np.exp(-np.sum(R, axis=2))


def matern_correlation(
    a: np.ndarray | Sequence[float],
    b: np.ndarray | Sequence[float],
    log_lengthscales: np.ndarray | Sequence[float],
) -> float:
    """prod_l (1 + r_l) exp(-sum_l r_l) with r_l = |a_l - b_l| e^{zeta_l}."""
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    if a_arr.shape != b_arr.shape or a_arr.ndim != 1:
        raise ValueError(f"dimension mismatch: {a_arr.shape} vs {b_arr.shape}")
    return float(correlation_matrix(a_arr[None, :], b_arr[None, :], log_lengthscales)[0, 0])


def log_marginal_likelihood(
    phi: np.ndarray,
    X: np.ndarray,
    y_centered: np.ndarray,
) -> tuple[float, np.ndarray]:
    """Log marginal likelihood and its gradient in (zeta, log tau^2, log upsilon).

    Returns ``(-inf, zeros)`` when the kernel matrix is not positive definite.
    """
    n, p = X.shape
    zeta = phi[:p]
    scale = math.exp(phi[p])
    nugget = math.exp(phi[p + 1])

    R = _scaled_distances(X, X, zeta)
    C = np.prod(1.0 + R, axis=2) * np.exp(-np.sum(R, axis=2))
    K = scale * C
    K[np.diag_indices(n)] += nugget
    try:
        L, lower = cho_factor(K, lower=True, check_finite=False)
    except LinAlgError:
        return -math.inf, np.zeros_like(phi)

    alpha = cho_solve((L, lower), y_centered, check_finite=False)
    lml = (
        -0.5 * float(y_centered @ alpha)
        - float(np.sum(np.log(np.diag(L))))
        - 0.5 * n * _LOG_2PI
    )

    K_inv = cho_solve((L, lower), np.eye(n), check_finite=False)
    W = np.outer(alpha, alpha) - K_inv
    grad = np.empty_like(phi)
    for dim in range(p):
        r = R[:, :, dim]
        dK = -scale * C * r * r / (1.0 + r)
        grad[dim] = 0.5 * float(np.sum(W * dK))
    grad[p] = 0.5 * float(np.sum(W * K)) - 0.5 * nugget * float(np.trace(W))
    grad[p + 1] = 0.5 * nugget * float(np.trace(W))
    return lml, grad


class GpPosterior:
    """Fitted GP: hyperparameters plus the factorized training data.

    Outputs are centered by ``center`` before fitting; predictions add it back.
    Instances are never mutated after construction.
    """

    def __init__(
        self,
        params: KernelParams,
        inputs: np.ndarray,
        outputs: np.ndarray,
        center: float,
        chol: np.ndarray,
        weights: np.ndarray,
    ):
        self._params = params
        self._zeta = np.asarray(params.log_lengthscales, dtype=float)
        self._X = inputs
        self._y = outputs
        self._center = center
        self._L = chol
        self._weights = weights
        for array in (self._X, self._y, self._L, self._weights):
            array.setflags(write=False)

    @property
    def params(self) -> KernelParams:
        return self._params

    @property
    def inputs(self) -> np.ndarray:
        return self._X

    @property
    def outputs(self) -> np.ndarray:
        return self._y

    @property
    def center(self) -> float:
        return self._center

    @property
    def chol(self) -> np.ndarray:
        return self._L

    @property
    def weights(self) -> np.ndarray:
        return self._weights

    @property
    def scale(self) -> float:
        return self._params.scale

    @property
    def nugget(self) -> float:
        return self._params.nugget

    @property
    def size(self) -> int:
        return self._X.shape[0]

    def kernel(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """tau^2 c(A, B) without the nugget."""
        return self.scale * correlation_matrix(A, B, self._zeta)

    def whiten(self, thetas: np.ndarray) -> np.ndarray:
        """L^{-1} k_t(thetas), shape (n_t, len(thetas))."""
        k = self.kernel(self._X, np.atleast_2d(thetas))
        return solve_triangular(self._L, k, lower=True, check_finite=False)

    def predict_many(self, thetas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Mean m_t and variance s_t^2 (clamped at 0) at each row of ``thetas``."""
        thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        k = self.kernel(self._X, thetas)
        mean = k.T @ self._weights + self._center
        V = solve_triangular(self._L, k, lower=True, check_finite=False)
        var = np.maximum(self.scale - np.sum(V * V, axis=0), 0.0)
        return mean, var

    def predict(self, theta: np.ndarray | Sequence[float]) -> tuple[float, float]:
        mean, var = self.predict_many(np.asarray(theta, dtype=float)[None, :])
        return float(mean[0]), float(var[0])

    def cov_matrix(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """cov_t between the rows of ``A`` and ``B``."""
        A = np.atleast_2d(A)
        B = np.atleast_2d(B)
        return self.kernel(A, B) - self.whiten(A).T @ self.whiten(B)

    def posterior_cov(
        self,
        theta: np.ndarray | Sequence[float],
        theta_star: np.ndarray | Sequence[float],
    ) -> float:
        a = np.asarray(theta, dtype=float)[None, :]
        b = np.asarray(theta_star, dtype=float)[None, :]
        return float(self.cov_matrix(a, b)[0, 0])

    def tau2(
        self,
        theta: np.ndarray | Sequence[float],
        theta_star: np.ndarray | Sequence[float],
    ) -> float:
        """tau_t^2(theta, theta*) = cov_t^2 / (s_t^2(theta*) + upsilon)."""
        cov = self.posterior_cov(theta, theta_star)
        _, var_star = self.predict(theta_star)
        return cov * cov / (var_star + self.nugget)

    def condition(self, thetas: np.ndarray, values: np.ndarray | Sequence[float]) -> "GpPosterior":
        """Posterior after appending observations, hyperparameters and center frozen."""
        X = np.vstack([self._X, np.atleast_2d(thetas)])
        y = np.concatenate([self._y, np.atleast_1d(np.asarray(values, dtype=float))])
        return build_posterior(X, y, self._params, center=self._center)


def build_posterior(
    inputs: np.ndarray,
    outputs: np.ndarray,
    params: KernelParams,
    center: float | None = None,
) -> GpPosterior:
    """Factorize K_t for fixed hyperparameters."""
    X = np.atleast_2d(np.asarray(inputs, dtype=float)).copy()
    y = np.asarray(outputs, dtype=float).copy()
    if X.shape[0] != y.shape[0]:
        raise ValueError(f"{X.shape[0]} inputs but {y.shape[0]} outputs")
    if X.shape[1] != len(params.log_lengthscales):
        raise ValueError("lengthscale count does not match input dimension")
    center = float(np.mean(y)) if center is None else center
    K = params.scale * correlation_matrix(X, X, params.log_lengthscales)
    K[np.diag_indices_from(K)] += params.nugget
    try:
        L, _ = cho_factor(K, lower=True, check_finite=False)
    except LinAlgError as e:
        raise GpFitError(f"kernel matrix is not positive definite (n_t={len(y)})") from e
    L = np.tril(L)
    weights = cho_solve((L, True), y - center, check_finite=False)
    return GpPosterior(params, X, y, center, L, weights)


def hyperparameter_bounds(X: np.ndarray, y_centered: np.ndarray) -> list[tuple[float, float]]:
    """Search box for (zeta, log tau^2, log upsilon) scaled to the data."""
    widths = np.ptp(X, axis=0)
    widths = np.where(widths > 0, widths, 1.0)
    var = float(np.var(y_centered))
    var = var if var > 0 else 1.0
    bounds = [(-math.log(10.0 * w), math.log(100.0 / w)) for w in widths]
    bounds.append((math.log(var * 1e-3), math.log(var * 1e3)))
    bounds.append((math.log(var * 1e-10), math.log(var)))
    return bounds


def _starting_points(
    bounds: list[tuple[float, float]],
    X: np.ndarray,
    y_centered: np.ndarray,
    n_starts: int,
    rng: np.random.Generator,
) -> list[np.ndarray]:
    widths = np.ptp(X, axis=0)
    widths = np.where(widths > 0, widths, 1.0)
    var = float(np.var(y_centered))
    var = var if var > 0 else 1.0
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    first = np.concatenate([np.log(2.0 / widths), [math.log(var), math.log(var * 1e-6)]])
    starts = [np.clip(first, lo, hi)]
    starts.extend(rng.uniform(lo, hi) for _ in range(n_starts - 1))
    return starts


def fit(
    inputs: np.ndarray,
    outputs: np.ndarray,
    config: FitConfig | None = None,
    rng: np.random.Generator | None = None,
    warm_start: KernelParams | None = None,
) -> GpPosterior:
    """Maximize the centered-data log marginal likelihood and factorize K_t.

    With ``warm_start`` the optimizer runs once from those hyperparameters;
    otherwise from ``config.n_starts`` points (the first deterministic).
    """
    config = config or FitConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    X = np.atleast_2d(np.asarray(inputs, dtype=float))
    y = np.asarray(outputs, dtype=float)
    if X.shape[0] < 2:
        raise ValueError(f"need at least 2 training points (got {X.shape[0]})")
    if not np.all(np.isfinite(y)):
        raise ValueError("training outputs must be finite")

    center = float(np.mean(y))
    yc = y - center
    bounds = hyperparameter_bounds(X, yc)
    lo = np.array([b[0] for b in bounds])
    hi = np.array([b[1] for b in bounds])
    if warm_start is not None and len(warm_start.log_lengthscales) == X.shape[1]:
        starts = [np.clip(warm_start.to_vector(), lo, hi)]
    else:
        starts = _starting_points(bounds, X, yc, config.n_starts, rng)

    def objective(phi: np.ndarray) -> tuple[float, np.ndarray]:
        lml, grad = log_marginal_likelihood(phi, X, yc)
        if not math.isfinite(lml):
            return _FAILED_NLML, np.zeros_like(phi)
        return -lml, -grad

    best_phi: np.ndarray | None = None
    best_value = math.inf
    for i, x0 in enumerate(starts):
        result = minimize(
            objective,
            x0,
            jac=True,
            method="L-BFGS-B",
            bounds=bounds,
            options={"maxiter": config.max_iter},
        )
        value = float(result.fun)
        if not math.isfinite(value) or value >= _FAILED_NLML:
            logger.warning("gp_fit_restart_failed", start=i, message=str(result.message))
            continue
        if value < best_value:
            best_value, best_phi = value, np.asarray(result.x, dtype=float)

    if best_phi is None:
        raise GpFitError(f"no hyperparameter start gave a positive definite kernel (n_t={len(y)})")

    params = KernelParams.from_vector(best_phi)
    floor = config.nugget_floor * params.scale
    if params.nugget < floor:
        params = params.model_copy(update={"nugget": floor})
    logger.debug(
        "gp_fitted",
        n_t=len(y),
        starts=len(starts),
        nlml=best_value,
        scale=params.scale,
        nugget=params.nugget,
    )
    return build_posterior(X, y, params, center=center)


def fit_samples(
    samples: Sequence[Sample],
    config: FitConfig | None = None,
    rng: np.random.Generator | None = None,
    warm_start: KernelParams | None = None,
) -> GpPosterior:
    """Fit on evaluated samples."""
    if any(not s.evaluated for s in samples):
        raise ValueError("every sample must be evaluated before fitting")
    X = np.array([s.theta for s in samples], dtype=float)
    y = np.array([s.output for s in samples], dtype=float)
    return fit(X, y, config=config, rng=rng, warm_start=warm_start)


def predict(gp: GpPosterior, theta: np.ndarray | Sequence[float]) -> tuple[float, float]:
    """(m_t(theta), s_t^2(theta))."""
    return gp.predict(theta)


def posterior_cov(
    gp: GpPosterior,
    theta: np.ndarray | Sequence[float],
    theta_star: np.ndarray | Sequence[float],
) -> float:
    """cov_t(theta, theta*)."""
    return gp.posterior_cov(theta, theta_star)


def estimated_posterior(
    gp: GpPosterior,
    problem: CalibrationProblem,
    thetas: np.ndarray,
) -> np.ndarray:
    """Emulator-based posterior f_N(y; m_t, sigma^2 + s_t^2) p(theta) at the rows of ``thetas``."""
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    mean, var = gp.predict_many(thetas)
    likelihood = norm.pdf(problem.observation, loc=mean, scale=np.sqrt(problem.noise_var + var))
    return np.where(in_box(problem.space, thetas), likelihood * problem.prior_density, 0.0)
