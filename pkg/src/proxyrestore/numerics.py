"""Seeded sampling, covariance estimation, small dense solves and Gaussian primitives."""

from __future__ import annotations

import hashlib
import math
import struct
from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
import scipy.linalg
import scipy.special

from .errors import InsufficientDataError, ParameterDomainError, SingularMatrixError

_MASK64 = (1 << 64) - 1
LOG_SQRT_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class RandomStream:
    """Immutable descriptor of a reproducible random sequence.

    The sequence is produced by a Philox counter-based generator keyed on
    ``(seed, substream_id)``, so any stream can be regenerated from its
    descriptor alone, independently of how work is scheduled.
    """

    seed: int
    substream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "seed", int(self.seed) & _MASK64)
        object.__setattr__(self, "substream_id", int(self.substream_id) & _MASK64)

    def generator(self) -> np.random.Generator:
        key = self.seed | (self.substream_id << 64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, *labels) -> "RandomStream":
        """Derive an independent substream from this one and a label path."""
        return RandomStream(self.seed, derive_id(self.substream_id, *labels))


def derive_id(*parts) -> int:
    h = hashlib.blake2b(digest_size=8)
    for p in parts:
        if isinstance(p, float):
            h.update(b"f" + struct.pack("<d", p))
        else:
            h.update(b"s" + repr(p).encode())
        h.update(b"\x00")
    return int.from_bytes(h.digest(), "little")


StreamLike = Union[RandomStream, np.random.Generator, int]


def as_generator(stream: StreamLike) -> np.random.Generator:
    if isinstance(stream, np.random.Generator):
        return stream
    if isinstance(stream, RandomStream):
        return stream.generator()
    return RandomStream(int(stream)).generator()


# Distribution specs -------------------------------------------------------


@dataclass(frozen=True)
class Gaussian:
    mean: float
    sd: float


@dataclass(frozen=True)
class Gamma:
    shape: float
    scale: float


@dataclass(frozen=True)
class Beta:
    a: float
    b: float


@dataclass(frozen=True)
class Bernoulli:
    p: float


@dataclass(frozen=True)
class Categorical:
    probs: tuple


def _require(cond, field, value, requirement):
    if not cond:
        raise ParameterDomainError(field, value, requirement)


def draw(spec, stream: StreamLike, n: int) -> np.ndarray:
    """Draw ``n`` i.i.d. values from ``spec`` using ``stream``."""
    rng = as_generator(stream)
    if isinstance(spec, Gaussian):
        _require(spec.sd > 0, "sd", spec.sd, "must be > 0")
        return rng.normal(spec.mean, spec.sd, size=n)
    if isinstance(spec, Gamma):
        _require(spec.shape > 0, "shape", spec.shape, "must be > 0")
        _require(spec.scale > 0, "scale", spec.scale, "must be > 0")
        return rng.gamma(spec.shape, spec.scale, size=n)
    if isinstance(spec, Beta):
        _require(spec.a > 0, "a", spec.a, "must be > 0")
        _require(spec.b > 0, "b", spec.b, "must be > 0")
        return rng.beta(spec.a, spec.b, size=n)
    if isinstance(spec, Bernoulli):
        _require(0.0 <= spec.p <= 1.0, "p", spec.p, "must lie in [0, 1]")
        return (rng.random(n) < spec.p).astype(float)
    if isinstance(spec, Categorical):
        probs = np.asarray(spec.probs, dtype=float)
        _require(
            probs.ndim == 1 and np.all(probs >= 0) and abs(probs.sum() - 1.0) <= 1e-9,
            "probs",
            spec.probs,
            "must be nonnegative and sum to 1",
        )
        return rng.choice(len(probs), size=n, p=probs / probs.sum()).astype(float)
    raise TypeError(f"unknown distribution spec {spec!r}")


# Covariances ----------------------------------------------------------------


@dataclass(frozen=True)
class CovMatrix:
    labels: tuple
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "entries", e)
        if e.shape != (len(self.labels), len(self.labels)):
            raise ValueError("entries shape does not match labels")

    def index(self, label) -> int:
        return self.labels.index(label)

    def __getitem__(self, key):
        a, b = key
        return float(self.entries[self.index(a), self.index(b)])

    def submatrix(self, labels: Sequence[str]) -> "CovMatrix":
        idx = [self.index(l) for l in labels]
        return CovMatrix(tuple(labels), self.entries[np.ix_(idx, idx)])


def sample_cov(data, labels: Sequence[str] | None = None) -> CovMatrix:
    """Unbiased sample covariance of a column table.

    ``data`` is either a mapping ``label -> column`` or a 2-D array whose
    columns are variables.
    """
    if isinstance(data, Mapping):
        labels = tuple(data.keys())
        arr = np.column_stack([np.asarray(data[k], dtype=float) for k in labels])
    else:
        arr = np.asarray(data, dtype=float)
        if arr.ndim == 1:
            arr = arr[:, None]
        if labels is None:
            labels = tuple(f"v{i}" for i in range(arr.shape[1]))
    if arr.shape[0] < 2:
        raise InsufficientDataError(f"sample covariance needs at least 2 rows, got {arr.shape[0]}")
    if np.isnan(arr).any():
        raise InsufficientDataError("sample covariance input has missing entries")
    centered = arr - arr.mean(axis=0)
    cov = centered.T @ centered / (arr.shape[0] - 1)
    cov = 0.5 * (cov + cov.T)
    return CovMatrix(tuple(labels), cov)


# Linear solves --------------------------------------------------------------


def solve_linear(A, b, max_condition: float = 1e12) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting, refusing ill-conditioned systems."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"A must be square, got shape {A.shape}")
    if A.shape[0] > 64:
        raise ValueError("solve_linear supports dimension <= 64")
    if not np.all(np.isfinite(A)):
        raise SingularMatrixError(math.inf)
    with np.errstate(all="ignore"):
        cond = np.linalg.cond(A)
    if not np.isfinite(cond) or cond > max_condition:
        raise SingularMatrixError(float(cond))
    lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
    return scipy.linalg.lu_solve((lu, piv), b, check_finite=False)


# Gaussian primitives --------------------------------------------------------


def gaussian_kl_diag(mean_q, sd_q) -> float:
    """KL of a diagonal Gaussian from the standard normal."""
    mean_q = np.asarray(mean_q, dtype=float)
    sd_q = np.asarray(sd_q, dtype=float)
    if np.any(sd_q <= 0):
        raise ParameterDomainError("sd_q", sd_q.tolist(), "all entries must be > 0")
    return float(np.sum(0.5 * (sd_q**2 + mean_q**2) - np.log(sd_q) - 0.5))


def gaussian_logpdf(y, mean, sd):
    if np.any(np.asarray(sd) <= 0):
        raise ParameterDomainError("sd", sd, "must be > 0")
    z = (np.asarray(y, dtype=float) - mean) / sd
    out = -LOG_SQRT_2PI - np.log(sd) - 0.5 * z * z
    return float(out) if np.ndim(out) == 0 else out


def std_normal_cdf(x):
    return 0.5 * scipy.special.erfc(-np.asarray(x) / math.sqrt(2.0))

