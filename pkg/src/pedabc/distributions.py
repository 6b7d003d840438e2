"""Distribution families used as priors, kernels and simulators.

Every family is described by a :class:`DistributionSpec`, a small immutable
record that can be parsed from its textual form (``normal(2,3)``,
``dirichlet(3,3,3)``, ...).  Sampling takes an explicit
:class:`numpy.random.Generator` so results are a pure function of the stream
state.  Densities are always returned in log space.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

__all__ = [
    "DistributionSpec",
    "ParameterDomainError",
    "ShapeError",
    "parse_distribution",
    "sample",
    "log_density",
    "mean",
    "variance",
    "gk_quantile",
    "standard_normal_quantile",
    "dirichlet_posterior_mean",
]

_LOG_2PI = math.log(2.0 * math.pi)

FAMILIES = {
    "normal": 2,
    "uniform": 2,
    "beta": 2,
    "gamma": 2,
    "dirichlet": None,
    "categorical": None,
    "gk": 5,
}


class ParameterDomainError(ValueError):
    """Distribution parameters or arguments outside their valid domain."""


class ShapeError(ValueError):
    """A value does not have the dimension its family requires."""


@dataclass(frozen=True)
class DistributionSpec:
    """Declarative description of one distribution.

    Parameters
    ----------
    family : str
        One of ``normal``, ``uniform``, ``beta``, ``gamma``, ``dirichlet``,
        ``categorical`` or ``gk``.
    params : tuple of float
        Family parameters in the textual order: ``normal(mean, sd)``,
        ``uniform(lo, hi)``, ``beta(alpha, beta)``, ``gamma(shape, scale)``,
        ``dirichlet(alpha_1, ..., alpha_K)``, ``categorical(p_1, ..., p_K)``,
        ``gk(a, b, c, g, k)``.
    """

    family: str
    params: tuple

    def __post_init__(self):
        family = self.family.lower()
        object.__setattr__(self, "family", family)
        object.__setattr__(self, "params", tuple(float(p) for p in self.params))
        _validate(self)

    @property
    def dim(self):
        """Dimension of a single draw (1 for scalar families)."""
        if self.family in ("dirichlet",):
            return len(self.params)
        return 1

    @property
    def is_simplex(self):
        return self.family == "dirichlet"

    def __str__(self):
        return "%s(%s)" % (self.family, ",".join("%g" % p for p in self.params))


def _validate(spec):
    fam, p = spec.family, spec.params
    if fam not in FAMILIES:
        raise ParameterDomainError("unknown distribution family %r" % fam)
    arity = FAMILIES[fam]
    if arity is not None and len(p) != arity:
        raise ParameterDomainError(
            "%s expects %d parameters, got %d" % (fam, arity, len(p)))
    if not all(math.isfinite(v) for v in p):
        raise ParameterDomainError("%s parameters must be finite" % fam)
    if fam == "normal" and not p[1] > 0:
        raise ParameterDomainError("normal sd must be > 0")
    # a degenerate interval is allowed: Uniform(5,5) is a point mass
    if fam == "uniform" and not p[1] >= p[0]:
        raise ParameterDomainError("uniform requires hi >= lo")
    if fam == "beta" and not (p[0] > 0 and p[1] > 0):
        raise ParameterDomainError("beta requires alpha > 0 and beta > 0")
    if fam == "gamma" and not (p[0] > 0 and p[1] > 0):
        raise ParameterDomainError("gamma requires shape > 0 and scale > 0")
    if fam == "dirichlet":
        if len(p) < 2:
            raise ParameterDomainError("dirichlet needs at least 2 components")
        if not all(a > 0 for a in p):
            raise ParameterDomainError("dirichlet alphas must be > 0")
    if fam == "categorical":
        if len(p) < 2:
            raise ParameterDomainError("categorical needs at least 2 categories")
        if any(v < 0 for v in p) or abs(sum(p) - 1.0) > 1e-9:
            raise ParameterDomainError(
                "categorical probabilities must be nonnegative and sum to 1")
    if fam == "gk" and not (p[1] > 0 and p[4] > -0.5):
        raise ParameterDomainError("gk requires b > 0 and k > -0.5")


_SPEC_RE = re.compile(r"^\s*([A-Za-z_]+)\s*\((.*)\)\s*$")


def parse_distribution(text):
    """Parse the canonical textual form, e.g. ``"Gamma( 1, 3 )"``.

    Parsing is case-insensitive and ignores whitespace.
    """
    m = _SPEC_RE.match(text)
    if not m:
        raise ParameterDomainError("cannot parse distribution %r" % text)
    family = m.group(1).lower()
    body = m.group(2).strip()
    try:
        params = tuple(float(x) for x in body.split(",")) if body else ()
    except ValueError:
        raise ParameterDomainError("non-numeric parameter in %r" % text) from None
    return DistributionSpec(family, params)


def sample(spec, rng, size=None):
    """Draw from ``spec`` using the generator ``rng``.

    With ``size=None`` a scalar (or a length-K simplex vector for Dirichlet)
    is returned; otherwise an array with leading shape ``size``.
    """
    fam, p = spec.family, spec.params
    if fam == "normal":
        return rng.normal(p[0], p[1], size)
    if fam == "uniform":
        if p[0] == p[1]:
            return p[0] if size is None else np.full(size, p[0])
        return rng.uniform(p[0], p[1], size)
    if fam == "beta":
        return rng.beta(p[0], p[1], size)
    if fam == "gamma":
        return rng.gamma(p[0], p[1], size)
    if fam == "dirichlet":
        alpha = np.asarray(p)
        shape = alpha.shape if size is None else tuple(np.atleast_1d(size)) + alpha.shape
        g = rng.gamma(alpha, 1.0, shape)
        return g / g.sum(axis=-1, keepdims=True)
    if fam == "categorical":
        return rng.choice(len(p), size=size, p=np.asarray(p))
    if fam == "gk":
        z = rng.standard_normal(size)
        return _gk_from_z(z, *p)
    raise ParameterDomainError(fam)  # pragma: no cover


def log_density(spec, value):
    """Log-density of ``value`` under ``spec``; ``-inf`` outside the support.

    ``value`` may be an array; for Dirichlet the last axis holds the K
    components and the result drops that axis.
    """
    fam, p = spec.family, spec.params
    x = np.asarray(value, dtype=float)
    if fam == "normal":
        z = (x - p[0]) / p[1]
        return -0.5 * z * z - math.log(p[1]) - 0.5 * _LOG_2PI
    if fam == "uniform":
        lo, hi = p
        if lo == hi:
            # point mass: log-probability 0 at the atom
            return np.where(x == lo, 0.0, -np.inf)[()]
        inside = (x >= lo) & (x <= hi)
        return np.where(inside, -math.log(hi - lo), -np.inf)[()]
    if fam == "beta":
        a, b = p
        inside = (x > 0) & (x < 1)
        xs = np.where(inside, x, 0.5)
        out = ((a - 1) * np.log(xs) + (b - 1) * np.log1p(-xs)
               - special.betaln(a, b))
        return np.where(inside, out, -np.inf)[()]
    if fam == "gamma":
        k, theta = p
        inside = x > 0
        xs = np.where(inside, x, 1.0)
        out = (k - 1) * np.log(xs) - xs / theta - special.gammaln(k) - k * math.log(theta)
        return np.where(inside, out, -np.inf)[()]
    if fam == "dirichlet":
        alpha = np.asarray(p)
        if x.shape[-1:] != alpha.shape:
            raise ShapeError("dirichlet value has %s components, expected %d"
                             % (x.shape[-1:], len(alpha)))
        inside = np.all(x > 0, axis=-1) & (np.abs(x.sum(axis=-1) - 1.0) <= 1e-9)
        xs = np.where(np.all(x > 0, axis=-1, keepdims=True), x, 1.0 / len(alpha))
        log_b = special.gammaln(alpha).sum() - special.gammaln(alpha.sum())
        out = ((alpha - 1) * np.log(xs)).sum(axis=-1) - log_b
        return np.where(inside, out, -np.inf)[()]
    if fam == "categorical":
        probs = np.asarray(p)
        idx = x.astype(int)
        inside = (idx == x) & (idx >= 0) & (idx < len(probs))
        with np.errstate(divide="ignore"):
            lp = np.log(probs[np.where(inside, idx, 0)])
        return np.where(inside, lp, -np.inf)[()]
    if fam == "gk":
        return _gk_log_density(x, *p)
    raise ParameterDomainError(fam)  # pragma: no cover


def mean(spec):
    """Closed-form mean (vector for Dirichlet); g-and-k by quadrature."""
    fam, p = spec.family, spec.params
    if fam == "normal":
        return p[0]
    if fam == "uniform":
        return 0.5 * (p[0] + p[1])
    if fam == "beta":
        return p[0] / (p[0] + p[1])
    if fam == "gamma":
        return p[0] * p[1]
    if fam == "dirichlet":
        a = np.asarray(p)
        return a / a.sum()
    if fam == "categorical":
        return float(np.dot(np.arange(len(p)), p))
    return _gk_moment(spec, 1)


def variance(spec):
    """Closed-form variance (component-wise for Dirichlet)."""
    fam, p = spec.family, spec.params
    if fam == "normal":
        return p[1] ** 2
    if fam == "uniform":
        return (p[1] - p[0]) ** 2 / 12.0
    if fam == "beta":
        a, b = p
        return a * b / ((a + b) ** 2 * (a + b + 1))
    if fam == "gamma":
        return p[0] * p[1] ** 2
    if fam == "dirichlet":
        a = np.asarray(p)
        a0 = a.sum()
        return a * (a0 - a) / (a0 ** 2 * (a0 + 1))
    if fam == "categorical":
        k = np.arange(len(p))
        return float(np.dot(k ** 2, p) - np.dot(k, p) ** 2)
    m = _gk_moment(spec, 1)
    return _gk_moment(spec, 2) - m * m


def standard_normal_quantile(p):
    """Inverse CDF of the standard normal distribution."""
    arr = np.asarray(p, dtype=float)
    if np.any(~((arr > 0) & (arr < 1))):
        raise ParameterDomainError("probability must lie in (0, 1)")
    return special.ndtri(arr)[()]


def _gk_from_z(z, a, b, c, g, k):
    z = np.asarray(z, dtype=float)
    # (1 - e^{-gz}) / (1 + e^{-gz}) == tanh(gz / 2), stable for large |gz|
    skew = 1.0 + c * np.tanh(0.5 * g * z)
    return (a + b * skew * (1.0 + z * z) ** k * z)[()]


def gk_quantile(p, a, b, c, g, k):
    """Quantile function of the g-and-k distribution."""
    if not b > 0:
        raise ParameterDomainError("gk requires b > 0")
    return _gk_from_z(standard_normal_quantile(p), a, b, c, g, k)


def _gk_dq_dz(z, a, b, c, g, k):
    t = np.tanh(0.5 * g * z)
    skew = 1.0 + c * t
    dskew = c * 0.5 * g * (1.0 - t * t)
    u = 1.0 + z * z
    return b * (dskew * u ** k * z + skew * (u ** k + 2.0 * k * z * z * u ** (k - 1)))


def _gk_log_density(x, a, b, c, g, k):
    flat = np.atleast_1d(x).astype(float).ravel()
    out = np.empty_like(flat)
    for i, xi in enumerate(flat):
        f = lambda z: _gk_from_z(z, a, b, c, g, k) - xi
        lo, hi = -1.0, 1.0
        while f(lo) > 0:
            lo *= 2.0
        while f(hi) < 0:
            hi *= 2.0
        z = optimize.brentq(f, lo, hi, xtol=1e-14)
        out[i] = -0.5 * z * z - 0.5 * _LOG_2PI - math.log(_gk_dq_dz(z, a, b, c, g, k))
    return out.reshape(np.shape(x))[()]


def _gk_moment(spec, order):
    from scipy import integrate

    f = lambda z: _gk_from_z(z, *spec.params) ** order * math.exp(-0.5 * z * z)
    val, _ = integrate.quad(f, -np.inf, np.inf)
    return val / math.sqrt(2 * math.pi)


def dirichlet_posterior_mean(counts, alpha):
    """Posterior mean of category probabilities after observing ``counts``.

    Component i is ``(c_i + alpha_i) / (N + sum(alpha))``.
    """
    counts = np.asarray(counts, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    if counts.shape != alpha.shape or counts.ndim != 1:
        raise ShapeError("counts and alpha must be vectors of equal length")
    if np.any(counts < 0) or np.any(alpha <= 0):
        raise ParameterDomainError("counts must be >= 0 and alpha > 0")
    return (counts + alpha) / (counts.sum() + alpha.sum())
