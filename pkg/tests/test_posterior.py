import warnings
from dataclasses import dataclass

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pedabc.parameters import Prior
from pedabc.posterior import (
    AdjustmentSkipped,
    PosteriorSample,
    RegressionAdjustment,
    credible_interval,
    posterior_table,
    prediction_intervals,
    regression_adjust,
    resimulate_mean,
    weighted_mean,
    weighted_quantile,
    weighted_variance,
)

P1 = Prior([("x", "uniform(-100, 100)")])


def ps1(values, weights=None, distances=None):
    values = np.asarray(values, dtype=float)[:, None]
    w = np.ones(len(values)) if weights is None else weights
    return PosteriorSample(values, w, P1, distances=distances)


@dataclass(frozen=True)
class Echo:
    """Deterministic simulator: the summary is the parameter."""

    summary_names = ("x",)
    param_names = ("x",)

    def simulate(self, params, seed):
        return np.array([params["x"]])


@dataclass(frozen=True)
class Noisy:
    summary_names = ("x",)
    param_names = ("x",)

    def simulate(self, params, seed):
        return np.array([params["x"] + np.random.default_rng(seed).normal()])


def test_weighted_mean_examples():
    assert weighted_mean(ps1([0, 1]), "x") == pytest.approx(0.5)
    assert weighted_mean(ps1([3, 99], [1, 0]), "x") == 3
    with pytest.raises(KeyError):
        weighted_mean(ps1([0, 1]), "y")


def test_weighted_variance():
    assert weighted_variance(ps1([0, 2]), "x") == pytest.approx(1.0)


def test_credible_interval_examples():
    assert credible_interval(ps1([4.0] * 5), "x") == (4.0, 4.0)
    u = np.random.default_rng(0).uniform(size=10_000)
    lo, hi = credible_interval(ps1(u), "x")
    assert abs(lo - 0.025) < 0.01 and abs(hi - 0.975) < 0.01
    with pytest.raises(ValueError):
        credible_interval(ps1(u), "x", mass=1.0)


def test_equal_weight_quantiles_match_numpy():
    x = np.random.default_rng(1).normal(size=101)
    q = [0.025, 0.3, 0.5, 0.975]
    np.testing.assert_allclose(weighted_quantile(x, np.ones(101), q), np.quantile(x, q), rtol=1e-12)


def test_weighted_quantile_respects_weights():
    # doubling a point's weight acts like duplicating it
    x = np.array([1.0, 2.0, 5.0])
    dup = np.array([1.0, 2.0, 2.0, 5.0])
    for q in (0.1, 0.5, 0.9):
        assert weighted_quantile(x, [1, 2, 1], q) == pytest.approx(
            weighted_quantile(dup, np.ones(4), q), abs=0.35)
    assert weighted_quantile(x, [0, 1, 0], 0.9) == 2.0


@given(st.lists(st.floats(-50, 50), min_size=2, max_size=40), st.floats(0.05, 0.9),
       st.floats(0.01, 0.09))
@settings(max_examples=60, deadline=None)
def test_interval_widens_with_mass(xs, mass, extra):
    ps = ps1(xs)
    lo1, hi1 = credible_interval(ps, "x", mass)
    lo2, hi2 = credible_interval(ps, "x", min(mass + extra, 0.99))
    assert lo2 <= lo1 + 1e-12 and hi1 <= hi2 + 1e-12
    assert lo1 <= np.median(xs) + 1e-9 or hi1 >= np.median(xs) - 1e-9


def test_posterior_table_and_blocks():
    prior = Prior([("theta", "dirichlet(3,3,3)"), ("n", "uniform(5,100)")],
                  labels={"theta": (1, 3, 5)})
    thetas = np.array([[0.2, 0.3, 0.5, 20.0], [0.4, 0.4, 0.2, 30.0]])
    ps = PosteriorSample(thetas, [1, 1], prior)
    rows = posterior_table(ps)
    assert [r[0] for r in rows] == ["theta_1", "theta_3", "theta_5", "n"]
    np.testing.assert_allclose(weighted_mean(ps, "theta"), [0.3, 0.35, 0.35])
    assert ps.mean_params() == {"theta": pytest.approx([0.3, 0.35, 0.35]), "n": 25.0}


def test_prediction_intervals_deterministic_simulator_is_zero_width():
    iv = prediction_intervals(ps1([2.5]), Echo(), n_draws=200)
    assert iv == {"x": (2.5, 2.5)}


def test_prediction_intervals_point_mass_reflects_simulator_noise():
    iv, draws = prediction_intervals(ps1([10.0]), Noisy(), n_draws=4000, seed=3,
                                     return_draws=True)
    lo, hi = iv["x"]
    assert lo == pytest.approx(10 - 1.96, abs=0.15) and hi == pytest.approx(10 + 1.96, abs=0.15)
    assert draws.shape == (4000, 1)


def test_prediction_intervals_are_seeded():
    ps = ps1([0.0, 1.0, 2.0])
    assert prediction_intervals(ps, Noisy(), 300, seed=5) == prediction_intervals(ps, Noisy(), 300, seed=5)


def test_resimulate_mean():
    assert resimulate_mean(Echo(), {"x": 3.0}, 10) == pytest.approx([3.0])
    assert abs(resimulate_mean(Noisy(), {"x": 3.0}, 4000, seed=1)[0] - 3.0) < 0.1


def test_adjustment_with_zero_slope_is_identity():
    x = np.array([1.0, 2.0, 3.0, 4.0])
    d = np.array([1.0, 2.0, 2.0, 1.0])  # uncorrelated with x
    ps = ps1(x, distances=d)
    adj = regression_adjust(ps)
    np.testing.assert_allclose(adj.thetas[:, 0], x, atol=1e-12)


def test_adjustment_fixes_particles_at_zero_distance():
    rng = np.random.default_rng(2)
    d = rng.uniform(0, 5, 50)
    d[7] = 0.0
    x = 1.0 + 0.4 * d + rng.normal(0, 0.1, 50)
    adj = regression_adjust(ps1(x, distances=d))
    assert adj.thetas[7, 0] == pytest.approx(x[7], abs=1e-12)
    # the trend is removed
    slope = np.polyfit(d, adj.thetas[:, 0], 1)[0]
    assert abs(slope) < 1e-10
    np.testing.assert_array_equal(adj.weights, ps1(x).weights)


def test_adjustment_matches_hand_ols():
    d = np.array([0.5, 1.0, 2.0, 3.5])
    x = np.array([1.1, 1.4, 2.2, 2.9])
    w = np.array([0.1, 0.2, 0.3, 0.4])
    beta = np.polyfit(d, x, 1)[0]
    adj = regression_adjust(ps1(x, w, d))
    np.testing.assert_allclose(adj.thetas[:, 0], x - beta * d, rtol=1e-12)
    np.testing.assert_allclose(adj.weights, w)


def test_equal_distances_skip_adjustment_with_warning():
    x = np.array([0.1, 0.5, 0.9])
    ps = ps1(x, distances=np.full(3, 2.0))
    with pytest.warns(AdjustmentSkipped):
        adj = regression_adjust(ps)
    assert adj is ps


def test_zero_discrepancy_summaries_leave_sample_unchanged():
    prior = Prior([("mean", "normal(0,1)")])
    thetas = np.array([[0.1], [0.4], [0.2]])
    summaries = np.tile([[3.0, 4.0]], (3, 1))
    ps = PosteriorSample(thetas, np.ones(3), prior, distances=np.zeros(3), summaries=summaries)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", AdjustmentSkipped)
        out = regression_adjust(ps, [3.0, 4.0], regressor="summaries")
    np.testing.assert_array_equal(out.thetas, thetas)


def test_adjusted_simplices_stay_valid():
    prior = Prior([("theta", "dirichlet(3,3,3)")])
    rng = np.random.default_rng(4)
    t = rng.dirichlet([3, 3, 3], 200)
    d = 10 * t[:, 0] + rng.uniform(0, 1, 200)  # strong dependence pushes values past 0
    ps = PosteriorSample(t, np.ones(200), prior, distances=d)
    adj = regression_adjust(ps)
    assert len(adj) == 200
    np.testing.assert_allclose(adj.thetas.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(adj.thetas >= 1e-9 / 2)


def test_regression_adjustment_estimator():
    rng = np.random.default_rng(5)
    d = rng.uniform(0, 3, 80)
    x = 2 - 0.5 * d + rng.normal(0, 0.05, 80)
    ps = ps1(x, distances=d)
    est = RegressionAdjustment().fit(ps)
    assert est.coef_.shape == (1, 1) and est.coef_[0, 0] == pytest.approx(-0.5, abs=0.05)
    np.testing.assert_allclose(est.transform(ps).thetas, regression_adjust(ps).thetas)
    assert RegressionAdjustment(regressor="summaries").get_params() == {"regressor": "summaries"}
