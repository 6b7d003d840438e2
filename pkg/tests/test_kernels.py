import logging
import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st
from scipy import stats

from pedabc.kernels import (
    DegenerateKernelError,
    DegeneratePopulationError,
    KernelSpec,
    NumericalDegeneracyError,
    Population,
    adaptive_data_weights,
    kernel_log_density,
    log_smc_weights,
    normalize_log_weights,
    parse_kernel,
    perturb,
    perturb_many,
    population_scale,
    smc_weight,
)
from pedabc.parameters import Prior

COMP = KernelSpec("component_gaussian", "x2_empirical")
MVN = KernelSpec("mvn", "x2_empirical")


def pop_of(values, weights=None, summaries=None):
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    n = len(values)
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=float)
    s = np.zeros((n, 1)) if summaries is None else summaries
    return Population(values, w, np.zeros(n), np.ones(n), s, 1.0)


def test_parse_kernel():
    assert parse_kernel("component_gaussian(x2_empirical)") == COMP
    assert parse_kernel(" MVN( x2_empirical ) ") == MVN
    k = parse_kernel("component_gaussian(fixed:0.1,0.2)")
    assert k.rule == "fixed" and k.values == (0.1, 0.2)
    assert parse_kernel(str(k)) == k
    for bad in ("gaussian(x2_empirical)", "mvn(triple)", "mvn(fixed:0,1)"):
        with pytest.raises(ValueError):
            parse_kernel(bad)


def test_population_scale_examples():
    assert population_scale(pop_of([0.0, 2.0]), COMP) == pytest.approx([2.0])
    assert population_scale(pop_of([3.0, 3.0, 3.0]), COMP) == pytest.approx([1e-8])
    var = population_scale(pop_of([5.0, 99.0], [1.0, 0.0]), COMP, floor=None)
    assert var[0] == 0.0
    with pytest.raises(DegeneratePopulationError):
        population_scale(pop_of([1.0]), COMP)


def test_population_scale_mvn_is_twice_weighted_covariance():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(50, 3))
    w = rng.uniform(size=50)
    w /= w.sum()
    cov = population_scale(pop_of(x, w), MVN)
    np.testing.assert_allclose(cov, 2 * np.cov(x.T, aweights=w, bias=True), rtol=1e-12)
    diag = population_scale(pop_of(x, w), COMP)
    np.testing.assert_allclose(diag, np.diag(cov), rtol=1e-12)
    once = population_scale(pop_of(x, w), KernelSpec("mvn", "empirical"))
    np.testing.assert_allclose(once, cov / 2, rtol=1e-12)


def test_mvn_floor_keeps_collapsed_population_positive_definite():
    x = np.tile([[0.3, 0.7]], (5, 1))
    cov = population_scale(pop_of(x), MVN)
    np.linalg.cholesky(cov)


def test_zero_scale_perturbation_is_identity():
    theta = np.array([1.5, -2.0])
    out = perturb(theta, COMP, np.zeros(2), np.random.default_rng(1))
    np.testing.assert_array_equal(out, theta)


def test_perturb_is_seeded():
    a = perturb(np.array([0.0]), COMP, np.array([1.0]), np.random.default_rng(5))
    b = perturb(np.array([0.0]), COMP, np.array([1.0]), np.random.default_rng(5))
    assert a[0] == b[0] == np.random.default_rng(5).standard_normal()


def test_simplex_perturbation_stays_on_the_simplex():
    prior = Prior([("theta", "dirichlet(3,3,3)"), ("n", "uniform(5,100)")])
    start = np.tile([1 / 3, 1 / 3, 1 / 3, 27.0], (2000, 1))
    out = perturb_many(start, COMP, np.array([0.01, 0.01, 4.0]), np.random.default_rng(3), prior)
    block = out[:, :3]
    np.testing.assert_allclose(block.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(block > 0)
    assert not np.allclose(block, 1 / 3)


@given(st.lists(st.floats(0.05, 1.0), min_size=3, max_size=3), st.floats(1e-4, 0.5),
       st.integers(0, 2 ** 32 - 1))
@settings(max_examples=50, deadline=None)
def test_simplex_invariants_hold_for_any_scale(raw, scale, seed):
    prior = Prior([("theta", "dirichlet(2,2,2)")])
    x = np.array(raw) / sum(raw)
    out = perturb(x, MVN, np.eye(2) * scale ** 2, np.random.default_rng(seed), prior)
    assert abs(out.sum() - 1) < 1e-9
    assert np.all(out >= 0) or prior.log_density(out) == -math.inf


def test_kernel_log_density_examples():
    for d in (1, 2, 5):
        x = np.zeros(d)
        ref = -0.5 * d * math.log(2 * math.pi)
        assert kernel_log_density(COMP, x, x, np.ones(d)) == pytest.approx(ref, abs=1e-12)
    new, old = np.array([0.7]), np.array([0.2])
    a = kernel_log_density(COMP, new, old, np.array([0.3]))
    b = kernel_log_density(MVN, new, old, np.array([[0.3]]))
    assert a == pytest.approx(b, abs=1e-12)
    val = kernel_log_density(MVN, np.array([1.0, 0.0]), np.zeros(2), np.eye(2))
    assert val == pytest.approx(-0.5 - math.log(2 * math.pi), abs=1e-12)


def test_kernel_log_density_matches_scipy_mvn():
    rng = np.random.default_rng(4)
    a = rng.normal(size=(3, 3))
    cov = a @ a.T + np.eye(3)
    new, old = rng.normal(size=3), rng.normal(size=3)
    ref = stats.multivariate_normal(old, cov).logpdf(new)
    assert kernel_log_density(MVN, new, old, cov) == pytest.approx(ref, rel=1e-12)


def test_degenerate_kernel_errors():
    with pytest.raises(DegenerateKernelError):
        kernel_log_density(MVN, np.zeros(2), np.zeros(2), np.array([[1.0, 1.0], [1.0, 1.0]]))
    with pytest.raises(DegenerateKernelError):
        kernel_log_density(COMP, np.zeros(2), np.zeros(2), np.array([1.0, 0.0]))


@given(st.lists(st.floats(-5, 5), min_size=2, max_size=2),
       st.lists(st.floats(-5, 5), min_size=2, max_size=2))
def test_kernel_is_symmetric(a, b):
    a, b = np.array(a), np.array(b)
    cov = np.array([[1.0, 0.3], [0.3, 0.5]])
    assert kernel_log_density(MVN, a, b, cov) == pytest.approx(kernel_log_density(MVN, b, a, cov))
    s = np.array([0.4, 2.0])
    assert kernel_log_density(COMP, a, b, s) == pytest.approx(kernel_log_density(COMP, b, a, s))


def brute_force_weight(theta, prior_pdf, prev, probs, sds):
    """Direct evaluation of p(theta) / sum_j v_j K(theta | theta_j)."""
    denom = 0.0
    for j in range(len(prev)):
        k = 1.0
        for c in range(len(theta)):
            k *= stats.norm(prev[j][c], sds[c]).pdf(theta[c])
        denom += probs[j] * k
    return prior_pdf(theta) / denom


def test_smc_weight_single_particle():
    prior = Prior([("mu", "normal(0, 10)")])
    prev = pop_of([0.4], [1.0])
    w = smc_weight(np.array([0.9]), prior, prev, COMP, np.array([0.25]))
    ref = stats.norm(0, 10).pdf(0.9) / stats.norm(0.4, 0.5).pdf(0.9)
    assert w == pytest.approx(ref, rel=1e-12)


def test_smc_weight_two_particles_matches_brute_force():
    prior = Prior([("mean", "normal(2,3)"), ("sd", "gamma(1,3)")])
    prev = pop_of([[3.8, 1.2], [4.3, 1.7]], [0.5, 0.5])
    var = np.array([0.2, 0.05])
    theta = np.array([4.0, 1.5])
    w = smc_weight(theta, prior, prev, COMP, var)

    def pdf(t):
        return stats.norm(2, 3).pdf(t[0]) * stats.gamma(1, scale=3).pdf(t[1])

    ref = brute_force_weight(theta, pdf, prev.thetas, prev.weights, np.sqrt(var))
    assert w == pytest.approx(ref, rel=1e-12)


def test_smc_weight_outside_prior_support_is_zero():
    prior = Prior([("p", "uniform(0, 1)")])
    assert smc_weight(np.array([1.4]), prior, pop_of([0.9, 0.95]), COMP, np.array([0.1])) == 0.0


def test_smc_weight_raises_when_linear_weight_overflows():
    prior = Prior([("mu", "normal(0, 1000)")])
    prev = pop_of([0.0, 0.1])
    lw = log_smc_weights(np.array([500.0]), prior, prev.thetas, prev.weights, COMP,
                         np.array([1e-6]))
    # the log weight stays finite; the linear one would not fit a float
    assert np.isfinite(lw[0])
    with pytest.raises(NumericalDegeneracyError):
        smc_weight(np.array([500.0]), prior, prev, COMP, np.array([1e-6]))


@given(st.integers(2, 30), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=40, deadline=None)
def test_smc_weight_brute_force_property(n, seed):
    rng = np.random.default_rng(seed)
    prior = Prior([("mean", "normal(2,3)"), ("sd", "gamma(2,1)")])
    prev_thetas = np.column_stack([rng.normal(4, 0.5, n), rng.gamma(4, 0.4, n)])
    probs = rng.uniform(0.1, 1, n)
    probs /= probs.sum()
    prev = pop_of(prev_thetas, probs)
    var = population_scale(prev, COMP)
    theta = np.array([rng.normal(4, 0.5), rng.gamma(4, 0.4)])

    def pdf(t):
        return stats.norm(2, 3).pdf(t[0]) * stats.gamma(2, scale=1).pdf(t[1])

    with np.errstate(divide="ignore"):
        ref = brute_force_weight(theta, pdf, prev_thetas, probs, np.sqrt(var))
    # a collapsed two-particle population can underflow the linear oracle
    assume(np.isfinite(ref))
    assert smc_weight(theta, prior, prev, COMP, var) == pytest.approx(ref, rel=1e-10)


@given(st.lists(st.floats(-700, 700), min_size=1, max_size=20), st.floats(-300, 300))
def test_normalization_and_rescaling_invariance(log_w, shift):
    w = normalize_log_weights(log_w)
    assert abs(w.sum() - 1) < 1e-9
    shifted = normalize_log_weights(np.array(log_w) + shift)
    np.testing.assert_allclose(shifted, w, rtol=1e-9, atol=1e-300)
    assert np.argmax(shifted) == np.argmax(w)


def test_normalize_rejects_all_zero():
    with pytest.raises(NumericalDegeneracyError):
        normalize_log_weights([-np.inf, -np.inf])


def test_adaptive_weights_reduce_to_parameter_weights():
    w = np.array([0.1, 0.3, 0.6])
    prev = pop_of([0.0, 1.0, 2.0], w, summaries=np.full((3, 2), 7.0))
    np.testing.assert_array_equal(adaptive_data_weights(prev, [3.0, 4.0], 2.0), w)


def test_adaptive_weights_dominance():
    prev = pop_of([0.0, 1.0], summaries=np.array([[5.0], [500.0]]))
    v = adaptive_data_weights(prev, [5.0], 1.0)
    assert v[0] == pytest.approx(1.0) and v[1] < 1e-300


def test_adaptive_weights_match_hand_evaluation():
    w = np.array([0.2, 0.5, 0.3])
    s = np.array([[1.0, 2.0], [1.5, 1.0], [0.0, 3.0]])
    h = np.array([0.8, 1.3])
    obs = np.array([1.2, 2.2])
    prev = pop_of([0.0, 1.0, 2.0], w, summaries=s)
    raw = [w[i] * stats.norm(s[i, 0], h[0]).pdf(obs[0]) * stats.norm(s[i, 1], h[1]).pdf(obs[1])
           for i in range(3)]
    ref = np.array(raw) / sum(raw)
    np.testing.assert_allclose(adaptive_data_weights(prev, obs, h), ref, rtol=1e-12)


def test_adaptive_weights_fall_back_with_warning(caplog):
    w = np.array([0.25, 0.75])
    prev = pop_of([0.0, 1.0], w, summaries=np.array([[np.inf], [np.inf]]))
    with caplog.at_level(logging.WARNING):
        v = adaptive_data_weights(prev, [0.0], 1.0)
    np.testing.assert_array_equal(v, w)
    assert "degenerate" in caplog.text
