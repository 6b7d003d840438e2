"""Posterior post-processing: weighted estimates, credible and prediction
intervals, and linear regression adjustment."""

from __future__ import annotations

import logging
import warnings

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin

from .parallel import parallel_map_simulations
from .simulators import make_model, rng_from_key
from .validation import check_weights

__all__ = [
    "PosteriorSample",
    "weighted_mean",
    "weighted_variance",
    "weighted_quantile",
    "credible_interval",
    "posterior_table",
    "prediction_intervals",
    "resimulate_mean",
    "regression_adjust",
    "RegressionAdjustment",
    "AdjustmentSkipped",
]

logger = logging.getLogger(__name__)

CLAMP = 1e-9


class AdjustmentSkipped(UserWarning):
    pass


class PosteriorSample:
    """Weighted particles with named columns.

    Parameters
    ----------
    thetas : ndarray (N, P)
    weights : ndarray (N,)
        Normalised on construction.
    prior : Prior
        Supplies parameter names, columns and simplex layout.
    distances, summaries : ndarray, optional
        Kept for regression adjustment.
    """

    def __init__(self, thetas, weights, prior, distances=None, summaries=None, run=None):
        self.thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
        w = check_weights(weights, len(self.thetas))
        self.weights = w / w.sum()
        self.prior = prior
        self.distances = None if distances is None else np.asarray(distances, dtype=float)
        self.summaries = None if summaries is None else np.asarray(summaries, dtype=float)
        self.run = run

    @classmethod
    def from_population(cls, pop, prior, run=None):
        return cls(pop.thetas, pop.weights, prior, pop.distances, pop.summaries, run)

    def __len__(self):
        return len(self.thetas)

    @property
    def names(self):
        return self.prior.names

    @property
    def columns(self):
        return self.prior.columns

    def column(self, param):
        """Values of a parameter column (``p``, ``theta1_5``) or block (``theta1``)."""
        if param in self.prior.columns:
            return self.thetas[:, self.prior.columns.index(param)]
        if param in self.prior.names:
            return self.prior.get(self.thetas, param)
        raise KeyError("unknown parameter %r (known: %s)"
                       % (param, ", ".join(self.prior.columns)))

    def mean(self):
        return dict(zip(self.columns, (self.weights @ self.thetas).tolist()))

    def mean_params(self):
        """Weighted mean as a simulator parameter dict."""
        return self.prior.as_dict(self.weights @ self.thetas)

    def replace(self, thetas):
        return PosteriorSample(thetas, self.weights, self.prior, self.distances,
                               self.summaries, self.run)


def weighted_mean(ps, param):
    """Weighted mean of a parameter column or block."""
    return ps.weights @ ps.column(param)


def weighted_variance(ps, param):
    x = ps.column(param)
    mu = ps.weights @ x
    return ps.weights @ (x - mu) ** 2


def weighted_quantile(values, weights, q):
    """Weighted quantile with linear interpolation between plotting positions.

    Sorted value ``k`` sits at ``(S_k - w_k/2 - w_1/2) / (1 - w_1/2 - w_n/2)``
    where ``S_k`` is the cumulative weight.  Equal weights give numpy's
    default (linear) rule.
    """
    x = np.asarray(values, dtype=float)
    w = check_weights(weights, x.size)
    keep = w > 0
    x, w = x[keep], w[keep] / w[keep].sum()
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    if x[0] == x[-1]:
        return np.full(np.shape(q), x[0])[()]
    cum = np.cumsum(w)
    pos = (cum - w / 2 - w[0] / 2) / (1 - w[0] / 2 - w[-1] / 2)
    return np.interp(q, pos, x)


def credible_interval(ps, param, mass=0.95):
    """Equal-tailed weighted interval ``(q_{(1-mass)/2}, q_{1-(1-mass)/2})``."""
    if not 0.0 < mass < 1.0:
        raise ValueError("mass must lie in (0, 1)")
    x = ps.column(param)
    if x.ndim != 1:
        raise ValueError("credible intervals are per column; got block %r" % param)
    if len(x) == 0:
        raise ValueError("empty posterior sample")
    tail = (1.0 - mass) / 2.0
    lo, hi = weighted_quantile(x, ps.weights, [tail, 1.0 - tail])
    return float(lo), float(hi)


def posterior_table(ps, mass=0.95):
    """Rows of (parameter, mean, variance, lo, hi) for every column."""
    rows = []
    for col in ps.columns:
        lo, hi = credible_interval(ps, col, mass)
        rows.append((col, float(weighted_mean(ps, col)),
                     float(weighted_variance(ps, col)), lo, hi))
    return rows


def _model(model, model_options):
    return make_model(model, **(model_options or {})) if isinstance(model, str) else model


def prediction_intervals(ps, model, n_draws=1000, mass=0.95, seed=0, workers=1,
                         model_options=None, return_draws=False):
    """Per-summary equal-tailed intervals of resimulated data.

    Draws ``n_draws`` particles by weight, simulates each once and takes
    the quantiles of each summary component.
    """
    model = _model(model, model_options)
    rng = rng_from_key((int(seed), 2, 0))
    idx = rng.choice(len(ps), size=int(n_draws), p=ps.weights)
    proposals = [(ps.prior.as_dict(ps.thetas[i]), (int(seed), 2, 1, k))
                 for k, i in enumerate(idx)]
    sims = np.vstack(parallel_map_simulations(model, proposals, workers))
    tail = (1.0 - mass) / 2.0
    lo, hi = np.quantile(sims, [tail, 1.0 - tail], axis=0)
    out = {name: (float(a), float(b)) for name, a, b in zip(model.summary_names, lo, hi)}
    return (out, sims) if return_draws else out


def resimulate_mean(model, params, n_reps=1000, seed=0, workers=1, model_options=None):
    """Mean simulated summary over ``n_reps`` runs at fixed ``params``."""
    model = _model(model, model_options)
    proposals = [(params, (int(seed), 3, k)) for k in range(int(n_reps))]
    return np.vstack(parallel_map_simulations(model, proposals, workers)).mean(axis=0)


def _regressors(ps, observed, regressor):
    if regressor == "distance":
        if ps.distances is None:
            raise ValueError("regression adjustment needs per-particle distances")
        return ps.distances[:, None]
    if regressor == "summaries":
        if ps.summaries is None or observed is None:
            raise ValueError("summary regression needs per-particle summaries and observed data")
        return ps.summaries - np.asarray(observed, dtype=float)
    raise ValueError("unknown regressor %r" % regressor)


def _fit_slopes(X, Y):
    design = np.column_stack([np.ones(len(X)), X])
    if np.linalg.matrix_rank(design) < design.shape[1]:
        return None
    coef, *_ = np.linalg.lstsq(design, Y, rcond=None)
    return coef[1:]


def _clamp_simplices(thetas, prior):
    out = thetas.copy()
    for sl in prior.simplex_slices():
        block = np.maximum(out[:, sl], CLAMP)
        out[:, sl] = block / block.sum(axis=1, keepdims=True)
    return out


def regression_adjust(ps, observed=None, regressor="distance"):
    """Linear regression adjustment of each parameter column.

    Fits ``theta = a + X b + e`` by ordinary least squares, with ``X`` the
    distance (default) or the summary discrepancy ``s - s_obs``, and returns
    ``a + e = theta - X b``: the fit at zero discrepancy plus each particle's
    residual.  Weights are unchanged; simplices are clamped at 1e-9 and
    renormalised.  A rank-deficient design skips the adjustment with a
    warning.
    """
    X = _regressors(ps, observed, regressor)
    beta = _fit_slopes(X, ps.thetas)
    if beta is None:
        warnings.warn("regression design is rank deficient; sample left unadjusted",
                      AdjustmentSkipped, stacklevel=2)
        return ps
    adjusted = ps.thetas - X @ beta
    return ps.replace(_clamp_simplices(adjusted, ps.prior))


class RegressionAdjustment(TransformerMixin, BaseEstimator):
    """Estimator form of :func:`regression_adjust`.

    ``fit(ps, observed)`` stores the slopes in ``coef_`` (rows follow the
    regressor, columns the parameter columns); ``transform(ps)`` applies them.
    """

    def __init__(self, regressor="distance"):
        self.regressor = regressor

    def fit(self, ps, observed=None):
        X = _regressors(ps, observed, self.regressor)
        beta = _fit_slopes(X, ps.thetas)
        self.skipped_ = beta is None
        self.coef_ = np.zeros((X.shape[1], ps.thetas.shape[1])) if beta is None else beta
        if self.skipped_:
            warnings.warn("regression design is rank deficient; sample left unadjusted",
                          AdjustmentSkipped, stacklevel=2)
        self.observed_ = observed
        return self

    def transform(self, ps):
        if self.skipped_:
            return ps
        X = _regressors(ps, self.observed_, self.regressor)
        return ps.replace(_clamp_simplices(ps.thetas - X @ self.coef_, ps.prior))
