"""Perturbation kernels, particle populations and importance weights."""

from __future__ import annotations

import logging
import math
import re
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

__all__ = [
    "KernelSpec",
    "parse_kernel",
    "Particle",
    "Population",
    "DegeneratePopulationError",
    "DegenerateKernelError",
    "NumericalDegeneracyError",
    "normalize_log_weights",
    "population_scale",
    "perturb",
    "perturb_many",
    "kernel_log_density",
    "kernel_log_matrix",
    "smc_weight",
    "log_smc_weights",
    "adaptive_data_weights",
    "VARIANCE_FLOOR",
]

logger = logging.getLogger(__name__)

VARIANCE_FLOOR = 1e-8
_MAX_LOG = math.log(np.finfo(float).max)
_LOG_2PI = math.log(2 * math.pi)


class DegeneratePopulationError(ValueError):
    pass


class DegenerateKernelError(ValueError):
    pass


class NumericalDegeneracyError(ArithmeticError):
    pass


@dataclass(frozen=True)
class KernelSpec:
    """Perturbation kernel.

    ``kind`` is ``component_gaussian`` or ``mvn``.  ``rule`` is
    ``x2_empirical`` (twice the weighted population variance/covariance),
    ``empirical`` (once) or ``fixed``; fixed ``values`` are per-component
    standard deviations on the free coordinates.
    """

    kind: str = "component_gaussian"
    rule: str = "x2_empirical"
    values: tuple = ()

    def __post_init__(self):
        if self.kind not in ("component_gaussian", "mvn"):
            raise ValueError("unknown kernel kind %r" % self.kind)
        if self.rule not in ("x2_empirical", "empirical", "fixed"):
            raise ValueError("unknown scale rule %r" % self.rule)
        if self.rule == "fixed":
            if not self.values or any(v <= 0 for v in self.values):
                raise ValueError("fixed kernel scales must be positive")
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))

    @property
    def multiplier(self):
        return 2.0 if self.rule == "x2_empirical" else 1.0

    def __str__(self):
        rule = self.rule
        if rule == "fixed":
            rule = "fixed:" + ",".join(repr(v) for v in self.values)
        return "%s(%s)" % (self.kind, rule)


_KERNEL_RE = re.compile(r"^\s*(component_gaussian|mvn)\s*\(\s*([^)]*)\)\s*$", re.I)


def parse_kernel(text):
    """Parse e.g. ``component_gaussian(x2_empirical)`` or ``mvn(fixed:0.1,0.2)``."""
    m = _KERNEL_RE.match(text)
    if not m:
        raise ValueError("cannot parse kernel %r" % text)
    kind, rule = m.group(1).lower(), m.group(2).strip().lower()
    values = ()
    if rule.startswith("fixed:"):
        values = tuple(float(v) for v in rule[len("fixed:"):].split(","))
        rule = "fixed"
    return KernelSpec(kind, rule, values)


@dataclass
class Particle:
    params: np.ndarray
    weight: float
    distance: float
    sim_attempts: int = 1


@dataclass
class Population:
    """One SMC generation, stored column-wise.

    Attributes
    ----------
    thetas : ndarray (N, P)
        Full parameter vectors (simplex blocks hold all K components).
    weights : ndarray (N,)
        Normalised importance weights.
    distances : ndarray (N,)
    attempts : ndarray (N,)
        Proposals drawn for each slot before it was accepted.
    summaries : ndarray (N, S)
        Simulated summary of each accepted particle.
    """

    thetas: np.ndarray
    weights: np.ndarray
    distances: np.ndarray
    attempts: np.ndarray
    summaries: np.ndarray
    epsilon: float
    t: int = 1
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.thetas = np.atleast_2d(np.asarray(self.thetas, dtype=float))
        self.weights = np.asarray(self.weights, dtype=float)
        self.distances = np.asarray(self.distances, dtype=float)
        self.attempts = np.asarray(self.attempts, dtype=np.int64)
        self.summaries = np.asarray(self.summaries, dtype=float).reshape(len(self.thetas), -1)

    def __len__(self):
        return self.thetas.shape[0]

    @property
    def particles(self):
        return [Particle(self.thetas[i], float(self.weights[i]),
                         float(self.distances[i]), int(self.attempts[i]))
                for i in range(len(self))]


def normalize_log_weights(log_w):
    """Normalise log-weights to linear weights summing to one."""
    log_w = np.asarray(log_w, dtype=float)
    finite = np.isfinite(log_w)
    if not finite.any():
        raise NumericalDegeneracyError("all weights are zero")
    w = np.exp(log_w - logsumexp(log_w[finite]))
    w[~finite] = 0.0
    return w / w.sum()


def _weighted_cov(x, w):
    mu = w @ x
    d = x - mu
    return (w[:, None] * d).T @ d


def population_scale(pop, kernel, prior=None, floor=VARIANCE_FLOOR):
    """Kernel scales from the previous population.

    Returns per-component variances (component kernel) or a covariance
    matrix (mvn), both on the free coordinates.
    """
    thetas = pop.thetas if prior is None else prior.to_free(pop.thetas)
    n, d = thetas.shape
    if kernel.rule == "fixed":
        var = np.asarray(kernel.values) ** 2
        if var.size != d:
            raise ValueError("kernel has %d fixed scales for %d free parameters"
                             % (var.size, d))
        return var if kernel.kind == "component_gaussian" else np.diag(var)
    if n < 2:
        raise DegeneratePopulationError("need at least 2 particles to estimate scales")
    w = np.asarray(pop.weights, dtype=float)
    w = w / w.sum()
    cov = kernel.multiplier * _weighted_cov(thetas, w)
    if kernel.kind == "component_gaussian":
        var = np.diag(cov).copy()
        if floor is None or floor <= 0:
            return var
        return np.maximum(var, floor)
    if floor is not None and floor > 0:
        idx = np.diag_indices(d)
        cov[idx] = np.maximum(cov[idx], floor)
        try:
            np.linalg.cholesky(cov)
        except np.linalg.LinAlgError:
            cov = cov + floor * np.eye(d)
    return cov


def _noise(kernel, scales, rng, n, d):
    if kernel.kind == "component_gaussian":
        return rng.standard_normal((n, d)) * np.sqrt(np.asarray(scales))
    return rng.multivariate_normal(np.zeros(d), scales, size=n, method="cholesky")


def perturb_many(thetas, kernel, scales, rng, prior=None, max_redraws=100):
    """Perturb each row of ``thetas``.

    Noise is added on the free coordinates; the last component of each
    simplex is recomputed as one minus the others.  Rows whose simplex
    leaves the open simplex are redrawn up to ``max_redraws`` times; rows
    still invalid after that are returned as-is and rejected by the prior.
    """
    thetas = np.atleast_2d(np.asarray(thetas, dtype=float))
    if prior is None:
        return thetas + _noise(kernel, scales, rng, *thetas.shape)
    free = prior.to_free(thetas)
    n, d = free.shape
    out = prior.from_free(free + _noise(kernel, scales, rng, n, d))
    simplices = prior.simplex_slices()
    if not simplices:
        return out
    for _ in range(max_redraws):
        bad = np.zeros(n, dtype=bool)
        for sl in simplices:
            bad |= np.any(out[:, sl] <= 0, axis=1)
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        out[idx] = prior.from_free(free[idx] + _noise(kernel, scales, rng, idx.size, d))
    return out


def perturb(particle, kernel, scales, rng, prior=None):
    """Perturb a single parameter vector."""
    return perturb_many(np.asarray(particle, dtype=float)[None, :], kernel,
                        scales, rng, prior)[0]


def kernel_log_matrix(kernel, new, old, scales, prior=None):
    """``K[i, j] = log K(new_i | old_j)`` on the free coordinates."""
    new = np.atleast_2d(np.asarray(new, dtype=float))
    old = np.atleast_2d(np.asarray(old, dtype=float))
    if prior is not None:
        new, old = prior.to_free(new), prior.to_free(old)
    diff = new[:, None, :] - old[None, :, :]
    if kernel.kind == "component_gaussian":
        var = np.asarray(scales, dtype=float)
        if np.any(var <= 0):
            if np.any(var < 0):
                raise DegenerateKernelError("negative kernel variance")
            raise DegenerateKernelError("zero kernel variance")
        const = -0.5 * (np.log(var).sum() + var.size * _LOG_2PI)
        return const - 0.5 * (diff ** 2 / var).sum(axis=-1)
    cov = np.asarray(scales, dtype=float)
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        raise DegenerateKernelError("kernel covariance is not positive definite") from None
    k = cov.shape[0]
    z = np.linalg.solve(chol, diff.reshape(-1, k).T).T.reshape(diff.shape)
    logdet = 2.0 * np.log(np.diag(chol)).sum()
    return -0.5 * (z ** 2).sum(axis=-1) - 0.5 * (logdet + k * _LOG_2PI)


def kernel_log_density(kernel, new, old, scales, prior=None):
    """``log K(new | old)`` for single parameter vectors."""
    return float(kernel_log_matrix(kernel, new, old, scales, prior)[0, 0])


def log_smc_weights(proposals, prior, prev_thetas, prev_probs, kernel, scales,
                    chunk=512):
    """Unnormalised log-weights ``log p(theta) - log sum_j v_j K(theta|theta_j)``."""
    proposals = np.atleast_2d(np.asarray(proposals, dtype=float))
    log_prior = np.atleast_1d(prior.log_density(proposals))
    with np.errstate(divide="ignore"):
        log_v = np.log(np.asarray(prev_probs, dtype=float))
    out = np.full(len(proposals), -np.inf)
    for start in range(0, len(proposals), chunk):
        block = slice(start, start + chunk)
        lk = kernel_log_matrix(kernel, proposals[block], prev_thetas, scales, prior)
        denom = logsumexp(lk + log_v[None, :], axis=1)
        if np.any(~np.isfinite(denom) & np.isfinite(log_prior[block])):
            raise NumericalDegeneracyError(
                "kernel mixture density is zero for an in-support proposal")
        out[block] = np.where(np.isfinite(log_prior[block]),
                              log_prior[block] - denom, -np.inf)
    return out


def smc_weight(proposal, prior, prev, kernel, scales, probs=None):
    """Unnormalised importance weight of one proposal.

    ``probs`` overrides the previous population's weights in the mixture
    denominator (used with data-based resampling weights).
    """
    probs = prev.weights if probs is None else probs
    lw = log_smc_weights(proposal, prior, prev.thetas, probs, kernel, scales)[0]
    if lw > _MAX_LOG:
        raise NumericalDegeneracyError(
            "weight exp(%.4g) overflows; use log_smc_weights" % lw)
    return float(np.exp(lw))


def adaptive_data_weights(prev, observed_summary, data_kernel_scale):
    """Resampling probabilities ``v_i ~ w_i K_x(x_obs | x_i)``.

    ``K_x`` is a product of Gaussians with per-component standard deviations
    ``data_kernel_scale``.  Falls back to the parameter weights if the
    kernel gives no usable mass.
    """
    obs = np.atleast_1d(np.asarray(observed_summary, dtype=float))
    h = np.broadcast_to(np.asarray(data_kernel_scale, dtype=float), obs.shape)
    w = np.asarray(prev.weights, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        z = (prev.summaries - obs) / h
        log_k = -0.5 * (z ** 2).sum(axis=1) - np.log(h).sum()
        log_v = np.log(w) + log_k
    ok = np.isfinite(log_v)
    if np.all(np.isfinite(log_k)) and np.ptp(log_k) == 0.0:
        # constant kernel factor cancels
        return w / w.sum()
    if not ok.any() or np.any(np.isnan(log_v)):
        logger.warning("data-kernel weights degenerate; using parameter weights")
        return w / w.sum()
    return normalize_log_weights(log_v)
