"""Generative processes for the proxy-confounder graph z -> (x, t, y), t -> y."""

from __future__ import annotations

import csv
import dataclasses
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

import numpy as np

from .errors import EmptyDatasetError, ParameterDomainError, SchemaError
from .interventional import DiscreteDo, GaussianLinearDo
from .numerics import Beta, CovMatrix, Gamma, StreamLike, as_generator, draw

LINGAUSS_COV_LABELS = ("x1", "x2", "t", "y")


@dataclass(frozen=True)
class LinearGaussianParams:
    c1: float
    c2: float
    c_t: float
    c_yz: float
    c_yt: float
    sigma_x1: float
    sigma_x2: float
    sigma_t: float
    sigma_y: float

    def __post_init__(self):
        for name in ("sigma_x1", "sigma_x2", "sigma_t", "sigma_y"):
            v = getattr(self, name)
            if not v > 0:
                raise ParameterDomainError(name, v, "must be > 0")

    def replace(self, **kw) -> "LinearGaussianParams":
        return dataclasses.replace(self, **kw)


@dataclass(frozen=True)
class BinaryParams:
    """All entries are probabilities of the variable being 1.

    ``p_x1_given_z[z]``, ``p_t_given_z[z]``, and ``p_y_given_zt[2 * z + t]``.
    """

    p_z: float
    p_x1_given_z: tuple
    p_x2_given_z: tuple
    p_t_given_z: tuple
    p_y_given_zt: tuple

    def __post_init__(self):
        for name, size in (
            ("p_x1_given_z", 2),
            ("p_x2_given_z", 2),
            ("p_t_given_z", 2),
            ("p_y_given_zt", 4),
        ):
            v = tuple(float(p) for p in getattr(self, name))
            if len(v) != size:
                raise ParameterDomainError(name, v, f"needs {size} entries")
            object.__setattr__(self, name, v)
        for name, v in self.flat().items():
            if not 0.0 < v < 1.0:
                raise ParameterDomainError(name, v, "must lie in (0, 1)")

    def flat(self) -> dict:
        out = {"p_z": self.p_z}
        for z in (0, 1):
            out[f"p_x1_given_z{z}"] = self.p_x1_given_z[z]
            out[f"p_x2_given_z{z}"] = self.p_x2_given_z[z]
            out[f"p_t_given_z{z}"] = self.p_t_given_z[z]
        for z in (0, 1):
            for t in (0, 1):
                out[f"p_y_given_z{z}_t{t}"] = self.p_y_given_zt[2 * z + t]
        return out

    def y_table(self) -> np.ndarray:
        """p(y=1 | z, t) as a 2x2 array indexed [z, t]."""
        return np.asarray(self.p_y_given_zt).reshape(2, 2)


@dataclass(frozen=True)
class ProcessVariant:
    """A linear-Gaussian base process, optionally with structural modifications.

    ``kind`` is ``"plain"``, ``"rotated-noise"`` (a high-variance irrelevant
    third proxy, then a 3-D rotation of the proxy triple) or
    ``"repeated-proxy"`` (noisy or exact copies of x1 and x2 appended).
    """

    base: LinearGaussianParams
    kind: str = "plain"
    sigma_x3: float = 20.0
    yaw: float = math.pi / 4
    pitch: float = math.pi / 4
    roll: float = math.pi / 4
    copy_noise_sd: float = 0.1
    exact_copies: bool = False

    def __post_init__(self):
        if self.kind not in ("plain", "rotated-noise", "repeated-proxy"):
            raise ParameterDomainError("kind", self.kind, "plain | rotated-noise | repeated-proxy")
        if self.kind == "rotated-noise" and not self.sigma_x3 > 0:
            raise ParameterDomainError("sigma_x3", self.sigma_x3, "must be > 0")
        if self.kind == "repeated-proxy" and self.copy_noise_sd < 0:
            raise ParameterDomainError("copy_noise_sd", self.copy_noise_sd, "must be >= 0")

    @property
    def n_proxies(self) -> int:
        return {"plain": 2, "rotated-noise": 3, "repeated-proxy": 4}[self.kind]

    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.yaw, self.pitch, self.roll)


Process = Union[ProcessVariant, LinearGaussianParams, BinaryParams]


def rotation_matrix(yaw: float, pitch: float, roll: float) -> np.ndarray:
    """R = Rz(yaw) @ Ry(pitch) @ Rx(roll)."""
    ca, sa = math.cos(yaw), math.sin(yaw)
    cb, sb = math.cos(pitch), math.sin(pitch)
    cg, sg = math.cos(roll), math.sin(roll)
    rz = np.array([[ca, -sa, 0.0], [sa, ca, 0.0], [0.0, 0.0, 1.0]])
    ry = np.array([[cb, 0.0, sb], [0.0, 1.0, 0.0], [-sb, 0.0, cb]])
    rx = np.array([[1.0, 0.0, 0.0], [0.0, cg, -sg], [0.0, sg, cg]])
    return rz @ ry @ rx


@dataclass
class Dataset:
    x: np.ndarray
    t: np.ndarray
    y: np.ndarray
    z_hidden: Optional[np.ndarray] = None
    schema: dict = field(default_factory=lambda: {"x": "continuous", "t": "continuous", "y": "continuous"})

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        if self.x.ndim == 1:
            self.x = self.x[:, None]
        self.t = np.asarray(self.t, dtype=float).reshape(-1)
        self.y = np.asarray(self.y, dtype=float).reshape(-1)
        n = self.x.shape[0]
        if self.t.size != n or self.y.size != n:
            raise SchemaError("x, t and y must have the same number of rows")
        if self.z_hidden is not None:
            self.z_hidden = np.asarray(self.z_hidden, dtype=float).reshape(-1)
            if self.z_hidden.size != n:
                raise SchemaError("z_hidden must have the same number of rows")

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def k(self) -> int:
        return self.x.shape[1]

    @property
    def is_binary(self) -> bool:
        return self.schema.get("y") == "binary"

    def observed(self) -> "Dataset":
        """Projection that drops the hidden confounder; estimators only see this."""
        if self.z_hidden is None:
            return self
        return Dataset(self.x, self.t, self.y, None, dict(self.schema))

    def subset(self, idx) -> "Dataset":
        z = None if self.z_hidden is None else self.z_hidden[idx]
        return Dataset(self.x[idx], self.t[idx], self.y[idx], z, dict(self.schema))

    def columns(self) -> dict:
        cols = {f"x{j + 1}": self.x[:, j] for j in range(self.k)}
        cols["t"] = self.t
        cols["y"] = self.y
        if self.z_hidden is not None:
            cols["z"] = self.z_hidden
        return cols

    def to_csv(self, path) -> None:
        cols = self.columns()
        names = list(cols)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(names)
            binary = self.is_binary
            for row in zip(*(cols[c] for c in names)):
                w.writerow([int(v) if binary else repr(float(v)) for v in row])

    @classmethod
    def from_csv(cls, path, binary: Optional[bool] = None) -> "Dataset":
        with open(path, newline="") as fh:
            r = csv.reader(fh)
            header = next(r)
            rows = np.array([[float(v) for v in row] for row in r], dtype=float)
        if rows.size == 0:
            raise EmptyDatasetError(f"{path} has no data rows")
        xs = [i for i, h in enumerate(header) if h.startswith("x")]
        t = rows[:, header.index("t")]
        y = rows[:, header.index("y")]
        z = rows[:, header.index("z")] if "z" in header else None
        if binary is None:
            binary = bool(np.all(np.isin(rows, (0.0, 1.0))))
        kind = "binary" if binary else "continuous"
        return cls(rows[:, xs], t, y, z, {"x": kind, "t": kind, "y": kind})


# Parameter samplers -------------------------------------------------------


def sample_lingauss_params(
    stream: StreamLike, sigma_gamma=(1.0, 5.0), coef_gamma=(0.3, 4.0)
) -> LinearGaussianParams:
    """Random linear-Gaussian process; every |c| is at least half its noise sd.

    Both gamma pairs are (shape, scale).
    """
    rng = as_generator(stream)
    sig = draw(Gamma(*sigma_gamma), rng, 4)
    sigma_x1, sigma_x2, sigma_t, sigma_y = sig
    # each coefficient is scaled by the noise sd of the variable it feeds
    owner = np.array([sigma_x1, sigma_x2, sigma_t, sigma_y, sigma_y])
    g = draw(Gamma(*coef_gamma), rng, 5)
    sign = np.where(rng.random(5) < 0.5, -1.0, 1.0)
    c = sign * (owner / 2 + owner * g)
    return LinearGaussianParams(
        c1=float(c[0]),
        c2=float(c[1]),
        c_t=float(c[2]),
        c_yz=float(c[3]),
        c_yt=float(c[4]),
        sigma_x1=float(sigma_x1),
        sigma_x2=float(sigma_x2),
        sigma_t=float(sigma_t),
        sigma_y=float(sigma_y),
    )


def sample_binary_params(stream: StreamLike, concentration=2.0, clip=(0.01, 0.99)) -> BinaryParams:
    rng = as_generator(stream)
    p = np.clip(draw(Beta(concentration, concentration), rng, 11), *clip)
    return BinaryParams(
        p_z=float(p[0]),
        p_x1_given_z=(p[1], p[2]),
        p_x2_given_z=(p[3], p[4]),
        p_t_given_z=(p[5], p[6]),
        p_y_given_zt=(p[7], p[8], p[9], p[10]),
    )


# Sampling -------------------------------------------------------------------


def _as_variant(process) -> Union[ProcessVariant, BinaryParams]:
    if isinstance(process, LinearGaussianParams):
        return ProcessVariant(process)
    return process


def generate(process: Process, n: int, stream: StreamLike) -> Dataset:
    """Ancestral sample of ``n`` rows; the confounder is kept in ``z_hidden``."""
    if n < 1:
        raise EmptyDatasetError("n must be >= 1")
    process = _as_variant(process)
    rng = as_generator(stream)
    if isinstance(process, BinaryParams):
        return _generate_binary(process, n, rng)
    p = process.base
    z = rng.standard_normal(n)
    x1 = p.c1 * z + p.sigma_x1 * rng.standard_normal(n)
    x2 = p.c2 * z + p.sigma_x2 * rng.standard_normal(n)
    t = p.c_t * z + p.sigma_t * rng.standard_normal(n)
    y = p.c_yz * z + p.c_yt * t + p.sigma_y * rng.standard_normal(n)
    if process.kind == "plain":
        x = np.column_stack([x1, x2])
    elif process.kind == "rotated-noise":
        x3 = process.sigma_x3 * rng.standard_normal(n)
        x = np.column_stack([x1, x2, x3]) @ process.rotation().T
    else:
        if process.exact_copies or process.copy_noise_sd == 0:
            x1c, x2c = x1.copy(), x2.copy()
        else:
            x1c = x1 + process.copy_noise_sd * rng.standard_normal(n)
            x2c = x2 + process.copy_noise_sd * rng.standard_normal(n)
        x = np.column_stack([x1, x2, x1c, x2c])
    return Dataset(x, t, y, z)


def _generate_binary(p: BinaryParams, n: int, rng: np.random.Generator) -> Dataset:
    z = (rng.random(n) < p.p_z).astype(int)
    x1 = rng.random(n) < np.asarray(p.p_x1_given_z)[z]
    x2 = rng.random(n) < np.asarray(p.p_x2_given_z)[z]
    t = (rng.random(n) < np.asarray(p.p_t_given_z)[z]).astype(int)
    y = rng.random(n) < p.y_table()[z, t]
    schema = {"x": "binary", "t": "binary", "y": "binary"}
    return Dataset(np.column_stack([x1, x2]).astype(float), t, y, z, schema)


# Population quantities ----------------------------------------------------


def population_cov_lingauss(params: LinearGaussianParams) -> CovMatrix:
    """Covariance of (x1, x2, t, y) written entry by entry in closed form."""
    c1, c2, ct = params.c1, params.c2, params.c_t
    cyz, cyt = params.c_yz, params.c_yt
    s1, s2, st, sy = params.sigma_x1, params.sigma_x2, params.sigma_t, params.sigma_y
    xy = ct * cyt + cyz
    ty = ct**2 * cyt + ct * cyz + cyt * st**2
    vy = ct**2 * cyt**2 + 2 * ct * cyt * cyz + cyt**2 * st**2 + cyz**2 + sy**2
    m = np.array(
        [
            [c1**2 + s1**2, c1 * c2, c1 * ct, c1 * xy],
            [c1 * c2, c2**2 + s2**2, c2 * ct, c2 * xy],
            [c1 * ct, c2 * ct, ct**2 + st**2, ty],
            [c1 * xy, c2 * xy, ty, vy],
        ]
    )
    return CovMatrix(LINGAUSS_COV_LABELS, m)


def structural_loadings(process) -> tuple:
    """Observed variables as a linear map of independent standard normals.

    Returns ``(labels, B)`` with observed = B @ (z, e_x1, e_x2, e_t, e_y, extra...),
    so the population covariance is ``B @ B.T``.
    """
    process = _as_variant(process)
    if isinstance(process, BinaryParams):
        raise TypeError("structural loadings exist only for linear-Gaussian processes")
    p = process.base
    extra = {"plain": 0, "rotated-noise": 1, "repeated-proxy": 2}[process.kind]
    m = 5 + extra
    row = lambda: np.zeros(m)  # noqa: E731
    x1, x2, t, y = row(), row(), row(), row()
    x1[0], x1[1] = p.c1, p.sigma_x1
    x2[0], x2[2] = p.c2, p.sigma_x2
    t[0], t[3] = p.c_t, p.sigma_t
    y[:] = p.c_yt * t
    y[0] += p.c_yz
    y[4] += p.sigma_y
    if process.kind == "plain":
        xs = [x1, x2]
    elif process.kind == "rotated-noise":
        x3 = row()
        x3[5] = process.sigma_x3
        xs = list(process.rotation() @ np.vstack([x1, x2, x3]))
    else:
        noise = 0.0 if process.exact_copies else process.copy_noise_sd
        x1c, x2c = x1.copy(), x2.copy()
        x1c[5] = noise
        x2c[6] = noise
        xs = [x1, x2, x1c, x2c]
    labels = tuple(f"x{j + 1}" for j in range(len(xs))) + ("t", "y")
    return labels, np.vstack(xs + [t, y])


def population_cov(process) -> CovMatrix:
    labels, B = structural_loadings(process)
    return CovMatrix(labels, B @ B.T)


def binary_joint(params: BinaryParams) -> np.ndarray:
    """Exact p(x1, x2, t, y) as a 2x2x2x2 array."""
    pz = np.array([1 - params.p_z, params.p_z])
    px1 = np.array([[1 - p, p] for p in params.p_x1_given_z])
    px2 = np.array([[1 - p, p] for p in params.p_x2_given_z])
    pt = np.array([[1 - p, p] for p in params.p_t_given_z])
    yt = params.y_table()
    py = np.stack([1 - yt, yt], axis=-1)  # [z, t, y]
    return np.einsum("z,za,zb,zt,zty->abty", pz, px1, px2, pt, py)


def true_do(process: Process):
    process = _as_variant(process)
    if isinstance(process, BinaryParams):
        pz = np.array([1 - process.p_z, process.p_z])
        return DiscreteDo(tuple(pz @ process.y_table()))
    p = process.base
    return GaussianLinearDo(p.c_yt, math.sqrt(p.sigma_y**2 + p.c_yz**2))


def observational_p_y_given_t(params: BinaryParams) -> tuple:
    joint = binary_joint(params).sum(axis=(0, 1))  # [t, y]
    return tuple(joint[:, 1] / joint.sum(axis=1))


# Serialization ------------------------------------------------------------


def process_to_dict(process: Process) -> dict:
    if isinstance(process, BinaryParams):
        return {"kind": "binary", **process.flat()}
    process = _as_variant(process)
    out = {"kind": process.kind, **dataclasses.asdict(process.base)}
    if process.kind == "rotated-noise":
        out.update(sigma_x3=process.sigma_x3, yaw=process.yaw, pitch=process.pitch, roll=process.roll)
    elif process.kind == "repeated-proxy":
        out.update(copy_noise_sd=process.copy_noise_sd, exact_copies=process.exact_copies)
    return out


def process_from_dict(doc: dict) -> Union[ProcessVariant, BinaryParams]:
    doc = dict(doc)
    kind = doc.pop("kind", "plain")
    if kind == "binary":
        g = lambda k: float(doc[k])  # noqa: E731
        return BinaryParams(
            p_z=g("p_z"),
            p_x1_given_z=(g("p_x1_given_z0"), g("p_x1_given_z1")),
            p_x2_given_z=(g("p_x2_given_z0"), g("p_x2_given_z1")),
            p_t_given_z=(g("p_t_given_z0"), g("p_t_given_z1")),
            p_y_given_zt=tuple(g(f"p_y_given_z{z}_t{t}") for z in (0, 1) for t in (0, 1)),
        )
    base_fields = {f.name for f in dataclasses.fields(LinearGaussianParams)}
    base = LinearGaussianParams(**{k: float(doc.pop(k)) for k in list(doc) if k in base_fields})
    return ProcessVariant(base, kind, **doc)


def save_process(process: Process, path) -> None:
    Path(path).write_text(json.dumps(process_to_dict(process), indent=2))


def load_process(path):
    return process_from_dict(json.loads(Path(path).read_text()))


# Named processes ------------------------------------------------------------

# c_t of the main linear-Gaussian process is not reported; 1.0 is an assumption.
MAIN_LINGAUSS_C_T = 1.0

MAIN_LINGAUSS = LinearGaussianParams(
    c1=1.03, c2=1.47, c_t=MAIN_LINGAUSS_C_T, c_yz=0.71, c_yt=-0.62,
    sigma_x1=0.65, sigma_x2=0.96, sigma_t=1.25, sigma_y=0.48,
)

LINGAUSS_REPLICATIONS = {
    "lingauss_p1": LinearGaussianParams(-0.53, 0.92, 0.99, -1.15, 0.46, 0.71, 1.02, 1.14, 0.84),
    "lingauss_p2": LinearGaussianParams(1.05, -0.57, -0.83, 0.76, -1.38, 1.04, 0.77, 0.68, 1.11),
    "lingauss_p3": LinearGaussianParams(1.30, -1.02, 0.80, 1.17, 1.11, 1.02, 0.91, 1.27, 0.88),
    "lingauss_p4": LinearGaussianParams(-1.58, 0.80, -0.82, 0.99, -1.13, 1.28, 0.87, 1.04, 0.77),
}

MAIN_BINARY = BinaryParams(
    p_z=0.56,
    p_x1_given_z=(0.56, 0.73),
    p_x2_given_z=(0.94, 0.26),
    p_t_given_z=(0.71, 0.16),
    p_y_given_zt=(0.57, 0.36, 0.17, 0.04),
)

BINARY_REPLICATIONS = {
    "binary_p1": BinaryParams(0.41, (0.88, 0.66), (0.63, 0.86), (0.51, 0.78), (0.21, 0.93, 0.66, 0.97)),
    "binary_p2": BinaryParams(0.49, (0.24, 0.73), (0.53, 0.63), (0.44, 0.29), (0.42, 0.12, 0.52, 0.15)),
    "binary_p3": BinaryParams(0.42, (0.63, 0.44), (0.81, 0.47), (0.19, 0.64), (0.49, 0.72, 0.61, 0.18)),
    "binary_p4": BinaryParams(0.45, (0.30, 0.44), (0.33, 0.65), (0.25, 0.78), (0.67, 0.54, 0.31, 0.26)),
}

ROTATED_NOISE = ProcessVariant(
    LinearGaussianParams(1.0, 2.0, 0.5, 0.6, 1.0, 0.5, 0.7, 1.0, 1.0),
    kind="rotated-noise",
    sigma_x3=20.0,
)

REPEATED_PROXY = ProcessVariant(
    LinearGaussianParams(1.0, 1.0, 0.5, 0.6, 1.0, 2.0, 2.0, 1.0, 1.0),
    kind="repeated-proxy",
    copy_noise_sd=0.1,
)

REPEATED_PROXY_EXACT = dataclasses.replace(REPEATED_PROXY, copy_noise_sd=0.0, exact_copies=True)

NAMED_PROCESSES = {
    "main_lingauss": MAIN_LINGAUSS,
    **LINGAUSS_REPLICATIONS,
    "main_binary": MAIN_BINARY,
    **BINARY_REPLICATIONS,
    "rotated_noise": ROTATED_NOISE,
    "repeated_proxy": REPEATED_PROXY,
    "repeated_proxy_exact": REPEATED_PROXY_EXACT,
}


def named_process(name: str):
    try:
        return NAMED_PROCESSES[name]
    except KeyError:
        raise KeyError(f"unknown process {name!r}; options: {', '.join(NAMED_PROCESSES)}") from None
