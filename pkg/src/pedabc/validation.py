"""Input validation helpers shared by estimators and simulators."""

import numbers

import numpy as np

SIMPLEX_TOL = 1e-9


def check_probability(p, name="p"):
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise ValueError("%s must lie in [0, 1], got %r" % (name, p))
    return p


def check_simplex(x, dim=None, name="simplex"):
    """Return ``x`` as a float vector after checking it is a probability vector."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("%s must be a vector with at least 2 components" % name)
    if dim is not None and x.size != dim:
        raise ValueError("%s has %d components, expected %d" % (name, x.size, dim))
    if np.any(x < 0) or np.any(x > 1) or abs(x.sum() - 1.0) > SIMPLEX_TOL:
        raise ValueError("%s must be nonnegative and sum to 1" % name)
    return x


def check_positive_int(n, name, minimum=1):
    if not isinstance(n, numbers.Integral) or n < minimum:
        raise ValueError("%s must be an integer >= %d, got %r" % (name, minimum, n))
    return int(n)


def check_summary(x, size=None, name="summary"):
    """Coerce to a finite 1-d float array."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1:
        raise ValueError("%s must be one-dimensional" % name)
    if size is not None and x.size != size:
        raise ValueError("%s has %d components, expected %d" % (name, x.size, size))
    if not np.all(np.isfinite(x)):
        raise ValueError("%s must be finite" % name)
    return x


def check_weights(w, n=None):
    """Nonnegative finite weights with a positive total."""
    w = np.asarray(w, dtype=float)
    if w.ndim != 1 or (n is not None and w.size != n):
        raise ValueError("weights must be a vector of length %s" % n)
    if np.any(w < 0) or not np.all(np.isfinite(w)) or w.sum() <= 0:
        raise ValueError("weights must be finite, nonnegative, with positive sum")
    return w
