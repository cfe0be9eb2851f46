"""Dense networks over a flat parameter vector, with tape-based reverse mode."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np

from ..errors import ShapeError, TapeMismatchError
from ..numerics import StreamLike, as_generator
from . import backend


@dataclass(frozen=True)
class MlpSpec:
    input_dim: int
    output_heads: int
    hidden_layers: int = 2
    hidden_width: int = 30
    activation: str = "elu"

    def __post_init__(self):
        if self.hidden_layers < 0 or self.hidden_width < 1:
            raise ValueError("hidden_layers must be >= 0 and hidden_width >= 1")
        if self.activation not in ("elu", "identity"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.activation == "identity" and self.hidden_layers > 0:
            raise ValueError("identity activation is only allowed without hidden layers")

    @property
    def dims(self) -> np.ndarray:
        return np.array(
            [self.input_dim] + [self.hidden_width] * self.hidden_layers + [self.output_heads], dtype=np.int64
        )

    @property
    def act_code(self) -> int:
        return 0 if self.activation == "elu" else 1

    def layout(self) -> list:
        d = self.dims
        out = []
        for l in range(len(d) - 1):
            out.append((f"W{l}", (int(d[l]), int(d[l + 1]))))
            out.append((f"b{l}", (int(d[l + 1]),)))
        return out

    @property
    def n_params(self) -> int:
        return sum(math.prod(s) for _, s in self.layout())


class ParamSet:
    """Named parameter blocks backed by one contiguous float64 vector.

    Sub-sets returned by :meth:`child` are views sharing memory and the
    version counter with their root, so an optimizer update of the root
    invalidates tapes recorded against any child.
    """

    def __init__(self, layout, flat=None, _version=None):
        self.layout = [(name, tuple(shape)) for name, shape in layout]
        size = sum(math.prod(s) for _, s in self.layout)
        if flat is None:
            flat = np.zeros(size)
        flat = np.asarray(flat, dtype=np.float64)
        if flat.ndim != 1 or flat.size != size:
            raise ShapeError(f"flat vector has {flat.size} entries, layout needs {size}")
        self.flat = flat
        self._version = _version if _version is not None else [0]
        self._offsets = {}
        off = 0
        for name, shape in self.layout:
            self._offsets[name] = (off, shape)
            off += math.prod(shape)

    @property
    def size(self) -> int:
        return self.flat.size

    @property
    def version(self) -> int:
        return self._version[0]

    def bump(self) -> None:
        self._version[0] += 1

    def __getitem__(self, name) -> np.ndarray:
        off, shape = self._offsets[name]
        return self.flat[off : off + math.prod(shape)].reshape(shape)

    def names(self):
        return [n for n, _ in self.layout]

    def child(self, prefix: str) -> "ParamSet":
        """View over the contiguous blocks named ``prefix/...``."""
        names = [n for n, _ in self.layout if n.startswith(prefix + "/")]
        if not names:
            raise KeyError(prefix)
        start = self._offsets[names[0]][0]
        sub = [(n[len(prefix) + 1 :], self._offsets[n][1]) for n in names]
        size = sum(math.prod(s) for _, s in sub)
        return ParamSet(sub, self.flat[start : start + size], self._version)

    def to_flat(self) -> np.ndarray:
        return self.flat.copy()

    def copy(self) -> "ParamSet":
        return ParamSet(self.layout, self.flat.copy())

    def zeros_like(self) -> "ParamSet":
        return ParamSet(self.layout)

    @classmethod
    def from_flat(cls, layout, flat) -> "ParamSet":
        return cls(layout, np.array(flat, dtype=np.float64))

    @classmethod
    def concat(cls, parts: dict) -> "ParamSet":
        layout = []
        chunks = []
        for prefix, ps in parts.items():
            layout.extend((f"{prefix}/{n}", s) for n, s in ps.layout)
            chunks.append(ps.flat)
        return cls(layout, np.concatenate(chunks) if chunks else np.zeros(0))

    def to_json(self, header: Optional[dict] = None) -> str:
        return json.dumps(
            {"header": header or {}, "layout": [[n, list(s)] for n, s in self.layout], "flat": self.flat.tolist()}
        )

    @classmethod
    def from_json(cls, text: str) -> "ParamSet":
        doc = json.loads(text)
        return cls.from_flat([(n, tuple(s)) for n, s in doc["layout"]], doc["flat"])


INIT_SCHEMES = ("glorot", "fan_in")


def init_params(spec: MlpSpec, stream: StreamLike, scheme: str = "glorot") -> ParamSet:
    """``glorot``: Glorot-uniform weights, zero biases.  ``fan_in``: weights
    and biases uniform on +-1/sqrt(fan_in)."""
    if scheme not in INIT_SCHEMES:
        raise ValueError(f"init scheme must be one of {INIT_SCHEMES}")
    rng = as_generator(stream)
    ps = ParamSet(spec.layout())
    for name, shape in spec.layout():
        if name.startswith("W"):
            if scheme == "glorot":
                limit = math.sqrt(6.0 / (shape[0] + shape[1]))
            else:
                limit = 1.0 / math.sqrt(shape[0])
            ps[name][...] = rng.uniform(-limit, limit, size=shape)
            fan_in = shape[0]
        elif scheme == "fan_in":
            ps[name][...] = rng.uniform(-1.0, 1.0, size=shape) / math.sqrt(fan_in)
    return ps


@dataclass
class Tape:
    spec: MlpSpec
    params: ParamSet
    version: int
    x: np.ndarray
    acts: np.ndarray

    @property
    def outputs(self) -> np.ndarray:
        d_out = int(self.spec.dims[-1])
        n = self.x.shape[0]
        return self.acts[self.acts.size - n * d_out :].reshape(n, d_out)


def forward(spec: MlpSpec, params: ParamSet, inputs) -> tuple:
    """Evaluate the network on a batch (rows) or a single vector.

    Returns ``(outputs, tape)``; ``outputs`` has one row per input row.
    """
    x = np.asarray(inputs, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :]
    if x.shape[1] != spec.input_dim:
        raise ShapeError(f"layer 0 expects {spec.input_dim} inputs, got {x.shape[1]}")
    if params.size != spec.n_params:
        raise ShapeError(f"parameter vector has {params.size} entries, spec needs {spec.n_params}")
    x = np.ascontiguousarray(x)
    dims = spec.dims
    acts = np.empty(x.shape[0] * int(dims[1:].sum()))
    backend.mlp_forward(params.flat, dims, x, acts, spec.act_code)
    tape = Tape(spec, params, params.version, x, acts)
    return tape.outputs, tape


def backward(tape: Tape, output_grads, grad_out: Optional[np.ndarray] = None, input_grad: bool = True):
    """Reverse pass: gradients of sum(output_grads * outputs).

    Returns ``(param_grads, input_grads)``; ``param_grads`` is a ParamSet
    (or ``grad_out`` filled in place when given), ``input_grads`` is None
    when ``input_grad`` is False.
    """
    if tape.params.version != tape.version:
        raise TapeMismatchError("parameters changed since the forward pass")
    d_out = np.ascontiguousarray(np.asarray(output_grads, dtype=np.float64).reshape(tape.outputs.shape))
    if grad_out is None:
        grads = ParamSet(tape.spec.layout())
        target = grads.flat
    else:
        grads = None
        target = grad_out
    d_x = np.empty_like(tape.x) if input_grad else None
    backend.mlp_backward(tape.params.flat, tape.spec.dims, tape.x, tape.acts, d_out, target, d_x, tape.spec.act_code)
    return (grads if grads is not None else target), d_x


def elu(x):
    x = np.asarray(x, dtype=float)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def spec_to_dict(spec: MlpSpec) -> dict:
    return asdict(spec)
