"""Built-in synthetic calibration problems."""

from seqcal.testbed.functions import (
    TestName,
    TestProblem,
    count_modes,
    make,
    names,
    true_posterior_on,
    true_unnormalized_posterior,
)

__all__ = [
    "TestName",
    "TestProblem",
    "count_modes",
    "make",
    "names",
    "true_posterior_on",
    "true_unnormalized_posterior",
]
