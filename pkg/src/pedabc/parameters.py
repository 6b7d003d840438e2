"""Named parameter vectors and joint priors.

A parameter vector is stored as a flat float array.  Scalar parameters take
one slot, simplex-valued parameters take K slots.  Perturbation kernels work
on the *free* coordinates, which drop the last component of every simplex
(it is determined by the others).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .distributions import DistributionSpec, log_density, parse_distribution, sample

__all__ = ["ParamBlock", "Prior"]


@dataclass(frozen=True)
class ParamBlock:
    name: str
    spec: DistributionSpec
    labels: tuple = ()

    @property
    def size(self):
        return self.spec.dim

    @property
    def simplex(self):
        return self.spec.is_simplex

    @property
    def columns(self):
        if not self.simplex:
            return (self.name,)
        labels = self.labels or tuple(str(i) for i in range(self.size))
        return tuple("%s_%s" % (self.name, lab) for lab in labels)


class Prior:
    """Ordered joint prior over independent named parameters.

    Parameters
    ----------
    items : sequence of (name, spec) pairs
        ``spec`` may be a :class:`DistributionSpec` or its textual form.
    labels : dict, optional
        Component labels for simplex parameters, e.g. ``{"theta1": (1, 3, 5)}``;
        used to name table columns.
    """

    def __init__(self, items, labels=None):
        labels = labels or {}
        blocks = []
        for name, spec in items:
            if isinstance(spec, str):
                spec = parse_distribution(spec)
            lab = tuple(str(x) for x in labels.get(name, ()))
            if lab and len(lab) != spec.dim:
                raise ValueError("%s: %d labels for %d components"
                                 % (name, len(lab), spec.dim))
            blocks.append(ParamBlock(name, spec, lab))
        if len({b.name for b in blocks}) != len(blocks):
            raise ValueError("duplicate parameter names")
        self.blocks = tuple(blocks)
        self.names = tuple(b.name for b in blocks)
        offsets = np.cumsum([0] + [b.size for b in blocks])
        self._slices = {b.name: slice(int(offsets[i]), int(offsets[i + 1]))
                        for i, b in enumerate(blocks)}
        self.size = int(offsets[-1])
        free = []
        for b in blocks:
            sl = self._slices[b.name]
            stop = sl.stop - 1 if b.simplex else sl.stop
            free.extend(range(sl.start, stop))
        self._free_idx = np.array(free, dtype=int)
        self.free_size = len(free)

    def __repr__(self):
        return "Prior(%s)" % ", ".join("%s=%s" % (b.name, b.spec) for b in self.blocks)

    @property
    def columns(self):
        return tuple(c for b in self.blocks for c in b.columns)

    def slice(self, name):
        return self._slices[name]

    def get(self, theta, name):
        """Value of parameter ``name`` (scalar, or K-vector for simplices)."""
        theta = np.asarray(theta)
        sl = self._slices[name]
        block = self.blocks[self.names.index(name)]
        out = theta[..., sl]
        return out if block.simplex else out[..., 0]

    def sample(self, rng, n):
        """Draw ``n`` joint samples, shape ``(n, size)``."""
        out = np.empty((n, self.size))
        for b in self.blocks:
            sl = self._slices[b.name]
            draws = sample(b.spec, rng, n)
            out[:, sl] = np.reshape(draws, (n, b.size))
        return out

    def log_density(self, thetas):
        """Joint log prior density, vectorised over leading axes."""
        thetas = np.asarray(thetas, dtype=float)
        total = np.zeros(thetas.shape[:-1])
        for b in self.blocks:
            part = thetas[..., self._slices[b.name]]
            if not b.simplex:
                part = part[..., 0]
            total = total + log_density(b.spec, part)
        return total

    def to_free(self, thetas):
        return np.asarray(thetas)[..., self._free_idx]

    def from_free(self, free):
        """Rebuild full vectors; each simplex's last component is 1 - sum."""
        free = np.asarray(free, dtype=float)
        out = np.empty(free.shape[:-1] + (self.size,))
        out[..., self._free_idx] = free
        for b in self.blocks:
            if b.simplex:
                sl = self._slices[b.name]
                out[..., sl.stop - 1] = 1.0 - out[..., sl.start:sl.stop - 1].sum(axis=-1)
        return out

    def simplex_slices(self):
        return [self._slices[b.name] for b in self.blocks if b.simplex]

    def as_dict(self, theta):
        return {b.name: (self.get(theta, b.name).tolist() if b.simplex
                         else float(self.get(theta, b.name)))
                for b in self.blocks}
