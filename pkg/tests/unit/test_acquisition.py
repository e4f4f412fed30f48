"""Tests for acquisition criteria and constant-liar batches."""

import numpy as np
import pytest
from scipy.stats import norm, qmc

from seqcal.acquisition import (
    build_batch,
    eivar,
    eivar_terms,
    expected_unimprovement,
    hybrid_dispatch,
    liar_value,
    prob_improvement,
    resolve_kind,
    score_candidates,
)
from seqcal.acquisition.criteria import pi_values, unimprovement_values
from seqcal.core.models import (
    AcquisitionKind,
    AcquisitionSpec,
    HybridOrder,
    KernelParams,
    LiarRule,
)
from seqcal.core.problem import CalibrationProblem, in_box
from seqcal.emulator import build_posterior


def sobol_normals(count_log2: int, seed: int) -> np.ndarray:
    u = qmc.Sobol(d=1, scramble=True, seed=seed).random_base2(count_log2)[:, 0]
    return norm.ppf(np.clip(u, 1e-12, 1 - 1e-12))


def within_three_se(samples: np.ndarray, value: float) -> bool:
    se = samples.std(ddof=1) / np.sqrt(len(samples))
    return abs(samples.mean() - value) <= 3 * se + 1e-12


@pytest.mark.parametrize("delta", [0.0, 0.1, 0.7, 2.0])
@pytest.mark.parametrize("theta", [[0.0, 0.0], [0.4, -0.6], [0.9, 0.9]])
def test_pi_and_unimprovement_match_monte_carlo(small_gp, quadratic_problem, theta, delta):
    """Test closed forms against draws of e = y - eta(theta*) - noise."""
    mean, var = small_gp.predict(theta)
    residual = quadratic_problem.observation - mean
    scale = np.sqrt(quadratic_problem.noise_var + var)
    e = residual + scale * sobol_normals(16, seed=7)

    pi = prob_improvement(small_gp, quadratic_problem, theta, delta)
    assert within_three_se((np.abs(e) <= delta).astype(float), pi)

    eu = expected_unimprovement(small_gp, quadratic_problem, theta, delta)
    assert within_three_se(np.maximum(np.abs(e) - delta, 0.0), eu)


def test_pi_is_a_probability_and_monotone_in_delta(small_gp, quadratic_problem):
    values = [
        prob_improvement(small_gp, quadratic_problem, [0.2, 0.3], d)
        for d in (0.0, 0.1, 0.5, 1.0, 5.0)
    ]
    assert all(0.0 <= v <= 1.0 for v in values)
    assert values == sorted(values)
    assert values[0] == 0.0


def test_negative_delta_is_rejected(small_gp, quadratic_problem):
    with pytest.raises(ValueError):
        prob_improvement(small_gp, quadratic_problem, [0.0, 0.0], -0.1)
    with pytest.raises(ValueError):
        expected_unimprovement(small_gp, quadratic_problem, [0.0, 0.0], -0.1)


def test_eivar_terms_match_monte_carlo(small_gp, quadratic_problem):
    """Test each summand against the expected variance over the future mean m'.

    After a hypothetical evaluation at theta*, m' ~ N(m, tau^2) and the
    remaining variance is s^2 - tau^2; the variance of the Gaussian
    likelihood under that law has a closed form in m'.
    """
    sigma2 = quadratic_problem.noise_var
    y = quadratic_problem.observation
    prior2 = quadratic_problem.prior_density**2
    theta_ref = np.array([[0.1, 0.2], [-0.5, 0.7]])
    candidate = np.array([[0.0, 0.3]])
    terms = eivar_terms(small_gp, quadratic_problem, candidate, theta_ref)
    assert terms.shape == (2, 1)

    z = sobol_normals(16, seed=11)
    for i, ref in enumerate(theta_ref):
        m, s2 = small_gp.predict(ref)
        tau2 = small_gp.tau2(ref, candidate[0])
        m_future = m + np.sqrt(tau2) * z
        v = s2 - tau2
        second_moment = norm.pdf(y, m_future, np.sqrt(sigma2 / 2 + v)) / (
            2 * np.sqrt(np.pi * sigma2)
        )
        first_moment = norm.pdf(y, m_future, np.sqrt(sigma2 + v))
        samples = prior2 * (second_moment - first_moment**2)
        assert within_three_se(samples, terms[i, 0])


def test_eivar_terms_shape_and_scalar_form(small_gp, quadratic_problem, rng):
    candidates = rng.uniform(-1, 1, size=(7, 2))
    theta_ref = rng.uniform(-1, 1, size=(5, 2))
    terms = eivar_terms(small_gp, quadratic_problem, candidates, theta_ref)
    assert terms.shape == (5, 7)
    assert (terms >= -1e-15).all()
    assert eivar(small_gp, quadratic_problem, candidates[3], theta_ref) == pytest.approx(
        terms[:, 3].mean()
    )
    with pytest.raises(ValueError):
        eivar_terms(small_gp, quadratic_problem, candidates, np.empty((0, 2)))


def test_eivar_degenerate_gap_drops_second_term(small_gp, square):
    """Test that a near-zero sigma^2 + s^2 - tau^2 stays finite."""
    tiny = CalibrationProblem(
        space=square, simulator=lambda t: 0.0, observation=0.0, noise_var=1e-14
    )
    point = small_gp.inputs[:1]
    terms = eivar_terms(small_gp, tiny, point, point)
    assert np.isfinite(terms).all()


def test_hybrid_dispatch_parity():
    assert hybrid_dispatch(1) is AcquisitionKind.EI
    assert hybrid_dispatch(2) is AcquisitionKind.EIVAR
    assert hybrid_dispatch(1, HybridOrder.EIVAR_ODD) is AcquisitionKind.EIVAR
    assert hybrid_dispatch(4, HybridOrder.EIVAR_ODD) is AcquisitionKind.EI
    with pytest.raises(ValueError):
        hybrid_dispatch(0)
    spec = AcquisitionSpec(kind=AcquisitionKind.PI)
    assert resolve_kind(spec, 2) is AcquisitionKind.PI


def test_score_candidates_ties_pick_lowest_index(small_gp, quadratic_problem):
    spec = AcquisitionSpec(kind=AcquisitionKind.EI)
    candidates = np.tile([[0.3, 0.3]], (4, 1))
    assert score_candidates(spec, small_gp, quadratic_problem, 1, candidates, 0.1) == 0


def test_score_candidates_rnd_needs_generator(small_gp, quadratic_problem, rng):
    spec = AcquisitionSpec(kind=AcquisitionKind.RND)
    candidates = rng.uniform(-1, 1, size=(5, 2))
    with pytest.raises(ValueError):
        score_candidates(spec, small_gp, quadratic_problem, 1, candidates, 0.1)
    index = score_candidates(spec, small_gp, quadratic_problem, 1, candidates, 0.1, rng=rng)
    assert 0 <= index < 5


@pytest.mark.parametrize(
    ("rule", "expected"), [(LiarRule.MEAN, 2.0), (LiarRule.MIN, 1.0), (LiarRule.MAX, 4.0)]
)
def test_liar_value_rules(rule, expected):
    assert liar_value(rule, np.array([1.0, 1.0, 4.0])) == expected


@pytest.mark.parametrize("kind", [AcquisitionKind.PI, AcquisitionKind.EI, AcquisitionKind.EIVAR])
def test_build_batch_size_bounds_and_reproducibility(small_gp, quadratic_problem, kind):
    spec = AcquisitionSpec(kind=kind, candidate_count=40, reference_count=20)
    theta_ref = np.random.default_rng(1).uniform(-1, 1, size=(20, 2))
    first = build_batch(spec, small_gp, quadratic_problem, 2, 4, 99, 0.2, theta_ref)
    second = build_batch(spec, small_gp, quadratic_problem, 2, 4, 99, 0.2, theta_ref)
    assert first.shape == (4, 2)
    assert in_box(quadratic_problem.space, first).all()
    np.testing.assert_array_equal(first, second)
    assert len({tuple(row) for row in first}) == 4


def test_build_batch_rnd_is_uniform_draws(small_gp, quadratic_problem):
    spec = AcquisitionSpec(kind=AcquisitionKind.RND)
    batch = build_batch(spec, small_gp, quadratic_problem, 1, 3, 5, 0.0)
    expected = np.random.default_rng(5).uniform([-1, -1], [1, 1], size=(3, 2))
    np.testing.assert_array_equal(batch, expected)


def test_build_batch_liar_changes_later_picks(small_gp, quadratic_problem):
    """Test that the liar constant feeds the working emulator after the first pick."""
    spec = AcquisitionSpec(kind=AcquisitionKind.EI, candidate_count=60)
    low = build_batch(spec, small_gp, quadratic_problem, 1, 3, 8, 0.1, liar=-10.0)
    high = build_batch(spec, small_gp, quadratic_problem, 1, 3, 8, 0.1, liar=10.0)
    np.testing.assert_array_equal(low[0], high[0])
    assert not np.array_equal(low[1:], high[1:])


def test_build_batch_rejects_empty(small_gp, quadratic_problem):
    with pytest.raises(ValueError):
        build_batch(AcquisitionSpec(), small_gp, quadratic_problem, 1, 0, 1, 0.1)


def test_unimprovement_nonnegative_and_nonincreasing_in_delta(small_gp, quadratic_problem):
    values = [
        expected_unimprovement(small_gp, quadratic_problem, [-0.4, 0.1], d)
        for d in (0.0, 0.05, 0.3, 1.0, 4.0)
    ]
    assert all(v >= 0 for v in values)
    assert values == sorted(values, reverse=True)


def test_pi_peaks_where_mean_matches_observation():
    residuals = np.linspace(-3, 3, 61)
    values = pi_values(residuals, np.full_like(residuals, 0.8), 0.4)
    assert residuals[np.argmax(values)] == pytest.approx(0.0)


def test_eivar_uncorrelated_candidate_leaves_variance_unchanged(small_gp, quadratic_problem):
    """Test that a candidate with no correlation reduces to the tau^2 = 0 value."""
    sigma2 = quadratic_problem.noise_var
    y = quadratic_problem.observation
    theta_ref = np.array([[0.2, -0.1], [0.6, 0.4]])
    terms = eivar_terms(small_gp, quadratic_problem, np.array([[500.0, 500.0]]), theta_ref)
    m, s2 = small_gp.predict_many(theta_ref)
    spread = sigma2 + s2
    expected = quadratic_problem.prior_density**2 * (
        norm.pdf(y, m, np.sqrt(sigma2 / 2 + s2)) / (2 * np.sqrt(np.pi * sigma2))
        - norm.pdf(y, m, np.sqrt(spread / 2)) / (2 * np.sqrt(np.pi * spread))
    )
    np.testing.assert_allclose(terms[:, 0], expected, rtol=1e-10)


@pytest.mark.parametrize("instance", range(50))
def test_closed_forms_match_monte_carlo_on_random_tuples(instance):
    """Test PI and expected unimprovement on random (m, s^2, sigma, delta, y).

    eta(theta*) ~ N(m, s^2) is integrated with 2^20 quasi-random draws; the
    observation noise given eta is integrated exactly.
    """
    rng = np.random.default_rng(500 + instance)
    m, y = rng.uniform(-2.0, 2.0, size=2)
    s2 = rng.uniform(0.01, 2.0)
    sigma = rng.uniform(0.1, 1.5)
    delta = rng.uniform(0.0, 2.0)
    residual = np.array([y - m])
    scale = np.array([np.sqrt(sigma**2 + s2)])

    r = y - (m + np.sqrt(s2) * sobol_normals(20, seed=instance))
    hit = norm.cdf((delta - r) / sigma) - norm.cdf((-delta - r) / sigma)
    assert within_three_se(hit, pi_values(residual, scale, delta)[0])

    above = (r - delta) * norm.cdf((r - delta) / sigma) + sigma * norm.pdf((r - delta) / sigma)
    below = (-r - delta) * norm.cdf((-r - delta) / sigma) + sigma * norm.pdf(
        (-r - delta) / sigma
    )
    assert within_three_se(above + below, unimprovement_values(residual, scale, delta)[0])


@pytest.mark.parametrize("instance", range(10))
def test_eivar_terms_match_nested_oracle(quadratic_problem, instance):
    """Test each summand against an expectation of variance built by conditioning.

    The outer draws sample the hypothetical output at theta* from its
    predictive law and condition the emulator on it. The inner variance of
    p~ under the updated emulator uses Gaussian moments.
    """
    rng = np.random.default_rng(900 + instance)
    X = rng.uniform(-1.0, 1.0, size=(5, 2))
    params = KernelParams(log_lengthscales=[0.5, 0.2], scale=1.3, nugget=1e-6)
    gp = build_posterior(X, np.sin(3.0 * X[:, 0]) + X[:, 1] ** 2, params)
    theta_ref = rng.uniform(-1.0, 1.0, size=(3, 2))
    candidate = rng.uniform(-1.0, 1.0, size=(1, 2))
    sigma2 = quadratic_problem.noise_var
    y = quadratic_problem.observation

    mean_star, var_star = gp.predict(candidate[0])
    outputs = mean_star + np.sqrt(var_star + gp.nugget) * sobol_normals(14, seed=instance)
    variance = np.zeros(len(theta_ref))
    for output in outputs:
        m, v = gp.condition(candidate, [output]).predict_many(theta_ref)
        second = norm.pdf(y, m, np.sqrt(sigma2 / 2 + v)) / (2 * np.sqrt(np.pi * sigma2))
        first = norm.pdf(y, m, np.sqrt(sigma2 + v))
        variance += second - first**2
    variance *= quadratic_problem.prior_density**2 / len(outputs)

    terms = eivar_terms(gp, quadratic_problem, candidate, theta_ref)[:, 0]
    np.testing.assert_allclose(terms, variance, rtol=0.05)


def test_eivar_summand_nonincreasing_in_tau2(small_gp, quadratic_problem):
    """Test that candidates more correlated with the reference point never score higher."""
    ref = np.array([[0.3, -0.2]])
    candidates = ref + np.linspace(0.0, 0.8, 60)[:, None] * np.array([[0.6, 0.8]])
    tau2 = np.array([small_gp.tau2(ref[0], c) for c in candidates])
    terms = eivar_terms(small_gp, quadratic_problem, candidates, ref)[0]
    ordered = terms[np.argsort(tau2, kind="stable")]
    assert (np.diff(ordered) <= 1e-12 * np.abs(terms).max()).all()
    assert terms[np.argmax(tau2)] < terms[np.argmin(tau2)]


def test_build_batch_rnd_ignores_the_liar(small_gp, quadratic_problem):
    batches = [
        build_batch(
            AcquisitionSpec(kind=AcquisitionKind.RND, liar=rule),
            small_gp,
            quadratic_problem,
            1,
            4,
            5,
            0.0,
            liar=liar,
        )
        for rule in LiarRule
        for liar in (None, -10.0, 10.0)
    ]
    for batch in batches[1:]:
        np.testing.assert_array_equal(batch, batches[0])
