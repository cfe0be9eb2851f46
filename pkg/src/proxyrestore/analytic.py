"""Closed-form effect restoration and the two regression baselines."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .datagen import Dataset
from .errors import (
    CollinearityError,
    DegenerateTreatmentError,
    DegenerateVarianceError,
    InsufficientDataError,
    NonIdentifiableError,
    ProxyDegeneracyError,
    SchemaError,
    SingularMatrixError,
)
from .interventional import DiscreteDo, GaussianLinearDo
from .numerics import CovMatrix, sample_cov, solve_linear

_IDENT_EPS = 1e-9


@dataclass(frozen=True)
class LinGaussRestoration:
    c_yt_hat: float
    c_yz_sq_hat: float
    c_t_sq_hat: float
    sigma_t_sq_hat: float
    c_t_c_yz_hat: float
    sigma_y_sq_hat: float
    do_dist: GaussianLinearDo


def restore_lingauss(cov: CovMatrix) -> LinGaussRestoration:
    """Recover the parameters of p(y|do(t)) from the covariance of (x1, x2, t, y).

    c_t^2 uses Cov(x1,t) Cov(x2,t) / Cov(x1,x2); this is the form implied by
    the population covariance (the variant Var(t) Cov(x2,t) / Cov(x1,x2) is
    not consistent with it).
    """
    c12 = cov["x1", "x2"]
    c1t, c2t = cov["x1", "t"], cov["x2", "t"]
    c1y, c2y = cov["x1", "y"], cov["x2", "y"]
    vt, vy, cty = cov["t", "t"], cov["y", "y"], cov["t", "y"]

    denom = vt * c12 - c1t * c2t
    if abs(denom) <= _IDENT_EPS or abs(c12) <= _IDENT_EPS:
        raise NonIdentifiableError(
            f"covariance does not identify the effect (Var(t)Cov(x1,x2)-Cov(x1,t)Cov(x2,t)={denom:.3g}, "
            f"Cov(x1,x2)={c12:.3g})"
        )
    c_yt = (cty * c12 - c2y * c1t) / denom
    if abs(c2t) > 1e-12:
        c_yz_sq = c1t * c12 * (cty * c2t - vt * c2y) ** 2 / (c2t * denom**2)
    else:
        # unconfounded treatment: Cov(x1,y) Cov(x2,y) / Cov(x1,x2) = c_yz^2
        c_yz_sq = c1y * c2y / c12
    c_t_sq = c1t * c2t / c12
    sigma_t_sq = vt - c_t_sq
    ct_cyz = cty - c_yt * sigma_t_sq - c_t_sq * c_yt
    sigma_y_sq = vy - c_yz_sq - c_yt**2 * sigma_t_sq - 2 * c_yt * ct_cyz - c_t_sq * c_yt**2
    total = sigma_y_sq + c_yz_sq
    if total <= 0:
        raise DegenerateVarianceError(sigma_y_sq, c_yz_sq)
    return LinGaussRestoration(
        c_yt_hat=c_yt,
        c_yz_sq_hat=c_yz_sq,
        c_t_sq_hat=c_t_sq,
        sigma_t_sq_hat=sigma_t_sq,
        c_t_c_yz_hat=ct_cyz,
        sigma_y_sq_hat=sigma_y_sq,
        do_dist=GaussianLinearDo(c_yt, math.sqrt(total)),
    )


def lingauss_cov_from_data(dataset: Dataset) -> CovMatrix:
    data = dataset.observed()
    if data.k < 2:
        raise SchemaError("linear-Gaussian restoration needs two proxies")
    return sample_cov({"x1": data.x[:, 0], "x2": data.x[:, 1], "t": data.t, "y": data.y})


def restore_lingauss_data(dataset: Dataset) -> LinGaussRestoration:
    return restore_lingauss(lingauss_cov_from_data(dataset))


# Binary -------------------------------------------------------------------


def empirical_joint(dataset: Dataset) -> np.ndarray:
    """Counts of (x1, x2, t, y) as a 2x2x2x2 array."""
    data = dataset.observed()
    idx = (
        data.x[:, 0].astype(int) * 8
        + data.x[:, 1].astype(int) * 4
        + data.t.astype(int) * 2
        + data.y.astype(int)
    )
    return np.bincount(idx, minlength=16).astype(float).reshape(2, 2, 2, 2)


def restore_binary(joint, max_condition: float = 1e8) -> DiscreteDo:
    """Matrix-adjustment estimate of p(y|do(t)) from a table over (x1, x2, t, y).

    For each t, p(y=1|do(t)) = r_t M_t^{-1} p(x1), where M_t[i, j] =
    p(x1=i | t, x2=j) and r_t[j] = p(y=1 | t, x2=j).  ``joint`` may hold
    counts or probabilities.
    """
    if isinstance(joint, Dataset):
        joint = empirical_joint(joint)
    joint = np.asarray(joint, dtype=float)
    if joint.shape != (2, 2, 2, 2):
        raise SchemaError(f"joint must have shape (2, 2, 2, 2), got {joint.shape}")
    total = joint.sum()
    if total <= 0:
        raise InsufficientDataError("empty joint table")
    joint = joint / total
    p_x1 = joint.sum(axis=(1, 2, 3))
    out = []
    for t in (0, 1):
        cell = joint[:, :, t, :]  # [x1, x2, y]
        p_x2t = cell.sum(axis=(0, 2))
        if np.any(p_x2t <= 0):
            raise InsufficientDataError(f"no observations for some x2 value at t={t}")
        M = cell.sum(axis=2) / p_x2t  # columns indexed by x2
        r = cell[:, :, 1].sum(axis=0) / p_x2t
        try:
            w = solve_linear(M, p_x1, max_condition=max_condition)
        except SingularMatrixError as exc:
            raise ProxyDegeneracyError(
                exc.condition, f"proxy matrix p(x1|t={t},x2) is degenerate (cond={exc.condition:.3g})"
            ) from None
        p1 = float(r @ w)
        p0 = float((1.0 - r) @ w)
        p1, p0 = min(max(p1, 0.0), 1.0), min(max(p0, 0.0), 1.0)
        out.append(p1 / (p0 + p1) if p0 + p1 > 0 else 0.5)
    return DiscreteDo(tuple(out))


# Regression baselines -----------------------------------------------------


@dataclass(frozen=True)
class AdjustmentResult:
    coef_t: float
    do_dist: GaussianLinearDo
    coefs: np.ndarray


def direct_adjust(dataset: Dataset, ridge: float = 0.0, max_condition: float = 1e10) -> AdjustmentResult:
    """Treat the proxies as the confounder: integrate p(y|x,t) over p(x).

    With a linear fit y = b0 + bx.x + bt t + e this is Gaussian with slope bt,
    intercept b0 + bx.mean(x) and variance Var(e) + bx' Cov(x) bx.
    ``ridge`` penalises the per-row Gram matrix (intercept excluded).
    """
    data = dataset.observed()
    if data.is_binary:
        raise SchemaError("direct_adjust requires a continuous outcome")
    n, k = data.n, data.k
    if n <= k + 2:
        raise InsufficientDataError(f"need more than {k + 2} rows, got {n}")
    design = np.column_stack([data.x, data.t, np.ones(n)])
    if ridge > 0:
        gram = design.T @ design / n
        penalty = np.full(k + 2, ridge)
        penalty[-1] = 0.0
        try:
            beta = solve_linear(gram + np.diag(penalty), design.T @ data.y / n)
        except SingularMatrixError as exc:
            raise CollinearityError(exc.condition) from None
    else:
        cond = np.linalg.cond(design)
        if not np.isfinite(cond) or cond > max_condition:
            raise CollinearityError(
                float(cond), f"design matrix is collinear (cond={cond:.3g}); set ridge > 0"
            )
        beta = np.linalg.lstsq(design, data.y, rcond=None)[0]
    resid = data.y - design @ beta
    resid_var = resid @ resid / (n - k - 2)
    bx = beta[:k]
    x_cov = np.atleast_2d(np.cov(data.x, rowvar=False))
    sd = math.sqrt(resid_var + bx @ x_cov @ bx)
    intercept = beta[-1] + bx @ data.x.mean(axis=0)
    return AdjustmentResult(float(beta[k]), GaussianLinearDo(float(beta[k]), sd, float(intercept)), beta)


def no_adjust(dataset: Dataset) -> AdjustmentResult:
    """Regress y on t alone, i.e. assume p(y|do(t)) = p(y|t)."""
    data = dataset.observed()
    n = data.n
    if n < 3:
        raise InsufficientDataError(f"need at least 3 rows, got {n}")
    tc = data.t - data.t.mean()
    var_t = tc @ tc / (n - 1)
    if var_t < 1e-12:
        raise DegenerateTreatmentError(f"Var(t)={var_t:.3g} is too small")
    slope = (tc @ (data.y - data.y.mean())) / (n - 1) / var_t
    intercept = data.y.mean() - slope * data.t.mean()
    resid = data.y - intercept - slope * data.t
    sd = math.sqrt(resid @ resid / (n - 2))
    return AdjustmentResult(float(slope), GaussianLinearDo(float(slope), sd, float(intercept)), np.array([slope, intercept]))


def population_direct_adjust_coef(cov: CovMatrix) -> float:
    """Population t-coefficient of the regression of y on all proxies and t."""
    regs = [l for l in cov.labels if l != "y"]
    sxx = cov.submatrix(regs).entries
    sxy = np.array([cov[l, "y"] for l in regs])
    beta = np.linalg.solve(sxx, sxy)
    return float(beta[regs.index("t")])


def population_no_adjust_coef(cov: CovMatrix) -> float:
    return cov["t", "y"] / cov["t", "t"]
