"""Summary statistics and distances between observed and simulated data."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "SummaryVector",
    "mean_summary",
    "euclidean_distance",
    "abs_mean_distance",
    "squared_distance",
    "DISTANCES",
    "get_distance",
]


@dataclass(frozen=True)
class SummaryVector:
    """Summary values with fixed component names (e.g. counter names)."""

    values: np.ndarray
    names: tuple = ()

    def __post_init__(self):
        v = np.atleast_1d(np.asarray(self.values, dtype=float))
        if not np.all(np.isfinite(v)):
            raise ValueError("summary components must be finite")
        if self.names and len(self.names) != v.size:
            raise ValueError("%d names for %d components" % (len(self.names), v.size))
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "names", tuple(self.names))

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def __len__(self):
        return self.values.size

    def as_dict(self):
        names = self.names or tuple(str(i) for i in range(len(self)))
        return dict(zip(names, self.values.tolist()))


def mean_summary(dataset, names=()):
    """Component-wise mean over replicates (rows)."""
    data = np.asarray(dataset, dtype=float)
    if data.size == 0:
        raise ValueError("empty dataset")
    if data.ndim == 1:
        data = data[:, None]
    return SummaryVector(data.mean(axis=0), names)


def _pair(a, b):
    if isinstance(a, SummaryVector) and isinstance(b, SummaryVector):
        if a.names and b.names and a.names != b.names:
            raise ValueError("summary names differ: %s vs %s" % (a.names, b.names))
    a = np.atleast_1d(np.asarray(a, dtype=float))
    b = np.atleast_1d(np.asarray(b, dtype=float))
    if a.shape[-1] != b.shape[-1]:
        raise ValueError("dimension mismatch: %d vs %d" % (a.shape[-1], b.shape[-1]))
    return a, b


def euclidean_distance(a, b):
    a, b = _pair(a, b)
    return np.sqrt(((a - b) ** 2).sum(axis=-1))[()]


def abs_mean_distance(a, b):
    a, b = _pair(a, b)
    return np.abs(a - b).mean(axis=-1)[()]


def squared_distance(a, b):
    """Sum of squared differences; ``(a - b)**2`` for scalar summaries."""
    a, b = _pair(a, b)
    return ((a - b) ** 2).sum(axis=-1)[()]


DISTANCES = {
    "euclidean": euclidean_distance,
    "abs_mean": abs_mean_distance,
    "squared": squared_distance,
}


def get_distance(name):
    try:
        return DISTANCES[name]
    except KeyError:
        raise ValueError("unknown distance %r (known: %s)"
                         % (name, ", ".join(DISTANCES))) from None
