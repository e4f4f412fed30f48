"""Gaussian process emulator."""

from seqcal.emulator.gp import (
    GpPosterior,
    build_posterior,
    correlation_matrix,
    estimated_posterior,
    fit,
    fit_samples,
    log_marginal_likelihood,
    matern_correlation,
    posterior_cov,
    predict,
)

__all__ = [
    "GpPosterior",
    "build_posterior",
    "correlation_matrix",
    "estimated_posterior",
    "fit",
    "fit_samples",
    "log_marginal_likelihood",
    "matern_correlation",
    "posterior_cov",
    "predict",
]
