"""Representations of p(y | do(t))."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import ParameterDomainError
from .numerics import LOG_SQRT_2PI


@dataclass(frozen=True)
class GaussianLinearDo:
    """y | do(t) ~ N(intercept + slope * t, sd^2)."""

    slope: float
    sd: float
    intercept: float = 0.0
    kind = "continuous"

    def __post_init__(self):
        if not self.sd > 0:
            raise ParameterDomainError("sd", self.sd, "must be > 0")

    def mean(self, t):
        return self.intercept + self.slope * np.asarray(t, dtype=float)

    def components(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        return self.mean(t)[:, None], np.full((t.size, 1), self.sd), np.ones(1)

    def pdf(self, y, t):
        """Density on a grid: ``y`` has shape (T, G), ``t`` shape (T,)."""
        m = self.mean(t)[:, None]
        z = (y - m) / self.sd
        return np.exp(-0.5 * z * z - LOG_SQRT_2PI) / self.sd


@dataclass(frozen=True)
class DiscreteDo:
    """Binary outcome: ``p_y1[t]`` is p(y=1 | do(t)) for t in {0, 1}."""

    p_y1: tuple
    kind = "discrete"

    def __post_init__(self):
        p = tuple(float(v) for v in self.p_y1)
        for v in p:
            if not 0.0 <= v <= 1.0:
                raise ParameterDomainError("p_y1", p, "entries must lie in [0, 1]")
        object.__setattr__(self, "p_y1", p)

    @property
    def table(self) -> np.ndarray:
        """Rows indexed by t, columns by y."""
        p = np.asarray(self.p_y1)
        return np.column_stack([1.0 - p, p])

    def mean(self, t):
        t = np.asarray(t)
        return np.asarray(self.p_y1)[t.astype(int)]


@dataclass
class MixtureDo:
    """Finite Gaussian mixture per t, components produced by ``component_fn``.

    ``component_fn(t)`` maps a (T,) array of treatment values to ``(means, sds)``
    of shape (T, K).  ``weights`` has shape (K,).
    """

    component_fn: Callable
    weights: np.ndarray
    kind = "continuous"
    _cache: dict = field(default_factory=dict, repr=False)

    def components(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        means, sds = self.component_fn(t)
        return means, sds, np.asarray(self.weights)

    def mean(self, t):
        means, _, w = self.components(t)
        return means @ (w / w.sum())

    def pdf(self, y, t, chunk=16):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        means, sds, w = self.components(t)
        w = w / w.sum()
        out = np.empty(y.shape)
        for s in range(0, t.size, chunk):
            m = means[s : s + chunk, None, :]
            sd = sds[s : s + chunk, None, :]
            z = (y[s : s + chunk, :, None] - m) / sd
            dens = np.exp(-0.5 * z * z - LOG_SQRT_2PI) / sd
            out[s : s + chunk] = dens @ w
        return out

    @classmethod
    def from_table(cls, t_values, means, sds, weights=None):
        """Mixture known only at a fixed set of treatment values."""
        t_values = np.asarray(t_values, dtype=float)
        means = np.atleast_2d(np.asarray(means, dtype=float))
        sds = np.atleast_2d(np.asarray(sds, dtype=float))
        if weights is None:
            weights = np.full(means.shape[1], 1.0 / means.shape[1])

        def lookup(t):
            idx = [int(np.flatnonzero(np.isclose(t_values, v))[0]) for v in t]
            return means[idx], sds[idx]

        return cls(lookup, np.asarray(weights, dtype=float))
