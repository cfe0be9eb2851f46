"""Distances between interventional distributions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .datagen import Dataset
from .errors import DomainKindError
from .numerics import StreamLike, as_generator


@dataclass(frozen=True)
class AidSpec:
    t_sample_count: int = 1000
    bounds_multiplier: float = 6.0
    points: int = 2001

    def __post_init__(self):
        if self.points < 3 or self.points % 2 == 0:
            raise ValueError("points must be odd and >= 3")
        if not self.bounds_multiplier > 0:
            raise ValueError("bounds_multiplier must be > 0")
        if self.t_sample_count < 1:
            raise ValueError("t_sample_count must be >= 1")


def _t_draws(t_source, count, stream):
    if isinstance(t_source, Dataset):
        t = t_source.t
    elif callable(t_source):
        return np.asarray(t_source(count), dtype=float).reshape(-1)
    else:
        t = np.asarray(t_source, dtype=float).reshape(-1)
    if t.size <= count:
        return t
    idx = as_generator(stream).choice(t.size, size=count, replace=False)
    return t[np.sort(idx)]


def aid(est, truth, t_source, spec: AidSpec = AidSpec(), stream: StreamLike = 0) -> float:
    """Average over p(t) of the L1 distance between two p(y|do(t)).

    ``t_source`` is a Dataset, an array of t values or a callable
    ``n -> t draws``.
    """
    if est.kind != truth.kind:
        raise DomainKindError(f"cannot compare {est.kind} and {truth.kind} distributions")
    if est.kind == "discrete":
        t = t_source.t if isinstance(t_source, Dataset) else np.asarray(t_source, dtype=float)
        p1 = float(np.mean(t == 1.0))
        gap = np.abs(np.asarray(est.p_y1) - np.asarray(truth.p_y1))
        # |dp(y=1)| + |dp(y=0)| = 2 |dp(y=1)|
        return float((1.0 - p1) * 2.0 * gap[0] + p1 * 2.0 * gap[1])
    t = _t_draws(t_source, spec.t_sample_count, stream)
    lo, hi = None, None
    for dist in (est, truth):
        means, sds, _ = dist.components(t)
        a = means.min(axis=1)
        b = means.max(axis=1)
        s = sds.max(axis=1)
        lo = a - spec.bounds_multiplier * s if lo is None else np.minimum(lo, a - spec.bounds_multiplier * s)
        hi = b + spec.bounds_multiplier * s if hi is None else np.maximum(hi, b + spec.bounds_multiplier * s)
    u = np.linspace(0.0, 1.0, spec.points)
    y = lo[:, None] + (hi - lo)[:, None] * u[None, :]
    l1 = _l1_between(est, truth, y, t)
    return float(np.clip(l1.mean(), 0.0, 2.0))


def _cdf(dist, y, t):
    means, sds, w = dist.components(t)
    w = np.asarray(w, dtype=float)
    return ndtr((y[:, None] - means) / sds) @ (w / w.sum())


def _l1_between(est, truth, y, t, iters=50):
    """Row-wise L1 distance between two Gaussian mixtures.

    Quadrature on |p - q| has an O(h^2) error from the slope jump at each
    crossing, so the grid is only used to bracket the crossings.  Between
    consecutive crossings the sign is fixed and the integral is a CDF
    difference.
    """
    neg = (est.pdf(y, t) - truth.pdf(y, t)) < 0
    rows, cols = np.nonzero(neg[:, :-1] != neg[:, 1:])
    a, b = y[rows, cols], y[rows, cols + 1]
    tr = t[rows]
    left_neg = neg[rows, cols]
    for _ in range(iters):
        m = 0.5 * (a + b)
        m_neg = (est.pdf(m[:, None], tr) - truth.pdf(m[:, None], tr))[:, 0] < 0
        same = m_neg == left_neg
        a = np.where(same, m, a)
        b = np.where(same, b, m)
    roots = 0.5 * (a + b)
    gap = _cdf(est, roots, tr) - _cdf(truth, roots, tr)
    # breakpoints -inf, roots..., +inf with the CDF gap vanishing at both ends
    out = np.zeros(y.shape[0])
    prev = np.zeros(y.shape[0])
    for r, g in zip(rows, gap):
        out[r] += abs(g - prev[r])
        prev[r] = g
    return out + np.abs(prev)


def do_means(dist, t_values) -> np.ndarray:
    return np.asarray(dist.mean(np.asarray(t_values, dtype=float)), dtype=float)


def ate(dist) -> float:
    m = do_means(dist, [0.0, 1.0])
    return float(m[1] - m[0])


def ate_error(est, truth) -> float:
    return abs(ate(est) - ate(truth))
