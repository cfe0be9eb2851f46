"""CEVAE estimators: full MLP, linear and binary-latent variants.

The decoder factorises as p(x|z) p(t|z) p(y|z,t) with the *observed* t fed
to the outcome network.  Gradients of the ELBO with respect to network
outputs are written out by hand and pushed through the MLP tapes.
"""

from __future__ import annotations

import csv
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .datagen import Dataset, LinearGaussianParams
from .errors import ContractError, NonFiniteError, SchemaError, ShapeError
from .interventional import DiscreteDo, GaussianLinearDo, MixtureDo
from .nn import AdamState, ExpSchedule, MlpSpec, ParamSet, adam_step, backward, forward, init_params
from .numerics import LOG_SQRT_2PI, RandomStream, StreamLike, as_generator

VARIANTS = ("full", "linear", "binary-latent")


@dataclass(frozen=True)
class CevaeConfig:
    variant: str = "full"
    latent_dim: int = 10
    y_head: str = "mlp"
    proxy_scale: float = 1.0
    kl_anneal_start: Optional[float] = None  # None: constant KL weight 1
    kl_ramp_epochs: int = 0
    epochs: int = 300
    batch_size: int = 200
    lr_start: float = 0.01
    lr_end: float = 0.001
    hidden_layers: int = 2
    hidden_width: int = 30
    sd_floor: float = 1e-3
    n_z: int = 500
    init_scheme: str = "glorot"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        if self.y_head not in ("mlp", "linear"):
            raise ValueError("y_head must be 'mlp' or 'linear'")
        if self.proxy_scale < 0:
            raise ValueError("proxy_scale must be >= 0")
        if self.latent_dim < 1:
            raise ValueError("latent_dim must be >= 1")
        if self.variant == "binary-latent" and self.latent_dim != 1:
            object.__setattr__(self, "latent_dim", 1)
        if self.variant == "linear" and self.y_head != "linear":
            object.__setattr__(self, "y_head", "linear")

    def kl_weight(self, epoch_progress: float) -> float:
        """KL weight at a fractional epoch index."""
        if self.kl_anneal_start is None or self.kl_ramp_epochs <= 0:
            return 1.0
        frac = min(1.0, epoch_progress / self.kl_ramp_epochs)
        return self.kl_anneal_start + (1.0 - self.kl_anneal_start) * frac

    def to_dict(self) -> dict:
        return asdict(self)


def _softplus(x):
    return np.logaddexp(0.0, x)


def _sigmoid(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


class CevaeModel:
    """Encoder/decoder networks plus shared scalars in one ParamSet.

    Blocks: ``enc`` q(z|x,t,y); ``dx`` p(x|z); ``dt`` p(t|z); ``dy``
    p(y|z,t) with t as the last input.  Shared log-sd blocks ``sd_*`` exist
    for linear heads; ``prior`` holds the Bernoulli prior logit of the
    binary-latent variant.
    """

    def __init__(self, config: CevaeConfig, x_dim: int, binary: bool, stream: StreamLike = 0):
        if binary and config.variant == "linear":
            raise SchemaError("the linear variant models continuous data only")
        self.config = config
        self.x_dim = x_dim
        self.binary = binary
        d = config.latent_dim
        self.d = d
        self.binary_latent = config.variant == "binary-latent"
        lin = config.variant == "linear"
        hidden = dict(hidden_layers=config.hidden_layers, hidden_width=config.hidden_width)
        linear = dict(hidden_layers=0, hidden_width=1, activation="identity")
        net = linear if lin else hidden

        # per-datapoint sds double the Gaussian heads; shared sds live in sd_* blocks
        self.shared_sd = {"enc": lin, "dx": lin, "dt": lin, "dy": lin or config.y_head == "linear"}
        enc_out = 1 if self.binary_latent else (d if lin else 2 * d)
        xo = x_dim if (binary or lin) else 2 * x_dim
        to = 1 if (binary or lin) else 2
        yo = 1 if (binary or self.shared_sd["dy"]) else 2
        self.specs = {
            "enc": MlpSpec(x_dim + 2, enc_out, **net),
            "dx": MlpSpec(d, xo, **net),
            "dt": MlpSpec(d, to, **net),
            "dy": MlpSpec(d + 1, yo, **(linear if config.y_head == "linear" else net)),
        }
        rng = as_generator(stream)
        parts = {name: init_params(spec, rng, config.init_scheme) for name, spec in self.specs.items()}
        if lin:
            parts["sd_enc"] = ParamSet([("log_sd", (d,))])
        if not binary:
            if lin:
                parts["sd_dx"] = ParamSet([("log_sd", (x_dim,))])
                parts["sd_dt"] = ParamSet([("log_sd", (1,))])
            if self.shared_sd["dy"]:
                parts["sd_dy"] = ParamSet([("log_sd", (1,))])
        if self.binary_latent:
            parts["prior"] = ParamSet([("logit", (1,))])
        self.params = ParamSet.concat(parts)
        self._views()

    def _views(self):
        self.nets = {name: self.params.child(name) for name in self.specs}
        self._slices = {}
        off = 0
        prefixes = []
        for name, shape in self.params.layout:
            prefix = name.split("/")[0]
            if prefix not in self._slices:
                self._slices[prefix] = [off, off]
                prefixes.append(prefix)
            off += math.prod(shape)
            self._slices[prefix][1] = off
        self._slices = {k: slice(*v) for k, v in self._slices.items()}

    def block(self, prefix: str) -> np.ndarray:
        return self.params.flat[self._slices[prefix]]

    def has_block(self, prefix: str) -> bool:
        return prefix in self._slices

    def copy(self) -> "CevaeModel":
        other = object.__new__(CevaeModel)
        other.__dict__.update(self.__dict__)
        other.params = self.params.copy()
        other._views()
        return other

    # heads ------------------------------------------------------------------

    def _shared_sd(self, name):
        log_sd = self.block("sd_" + name)
        return self.config.sd_floor + np.exp(log_sd), np.exp(log_sd)

    def encode(self, x, t, y):
        """Gaussian latent: (mean, sd); binary latent: q(z=1)."""
        inp = np.column_stack([x, t, y])
        out, tape = forward(self.specs["enc"], self.nets["enc"], inp)
        if self.binary_latent:
            return _sigmoid(out[:, 0]), (tape, out)
        d = self.d
        if self.shared_sd["enc"]:
            sd, _ = self._shared_sd("enc")
            return out[:, :d], np.broadcast_to(sd, out.shape), (tape, out)
        return out[:, :d], self.config.sd_floor + _softplus(out[:, d:]), (tape, out)

    def prior_prob(self) -> float:
        return float(_sigmoid(self.block("prior")[0]))

    def decode_y(self, z, t):
        """Outcome head on latent rows ``z`` and treatments ``t``."""
        out, _ = forward(self.specs["dy"], self.nets["dy"], np.column_stack([z, t]))
        if self.binary:
            return _sigmoid(out[:, 0]), None
        if self.shared_sd["dy"]:
            sd, _ = self._shared_sd("dy")
            return out[:, 0], np.full(out.shape[0], sd[0])
        return out[:, 0], self.config.sd_floor + _softplus(out[:, 1])

    def decode_t_mean(self, z):
        out, _ = forward(self.specs["dt"], self.nets["dt"], z)
        return _sigmoid(out[:, 0]) if self.binary else out[:, 0]

    # checkpoints ------------------------------------------------------------

    def header(self) -> dict:
        return {"config": self.config.to_dict(), "x_dim": self.x_dim, "binary": self.binary}

    def save(self, path) -> None:
        Path(path).write_text(self.params.to_json(self.header()))

    @classmethod
    def load(cls, path) -> "CevaeModel":
        doc = json.loads(Path(path).read_text())
        h = doc["header"]
        model = cls(CevaeConfig(**h["config"]), h["x_dim"], h["binary"])
        set_custom_init(model, ParamSet.from_json(Path(path).read_text()))
        return model


# ELBO -------------------------------------------------------------------------


@dataclass
class ElboTrace:
    value: float
    x_term: float  # unscaled E[log p(x|z)]
    t_term: float
    y_term: float
    kl_term: float
    grad: Optional[np.ndarray] = None  # gradient of ``value`` w.r.t. model.params.flat


def _gauss_head(out, v, m, shared, floor):
    """Log-likelihood of columns ``v`` and gradients w.r.t. raw head outputs.

    Returns ``(ll_rows, d_out, d_log_sd)``: d_out has the shape of ``out``;
    d_log_sd is set for shared sds (``shared`` = (sd, dsd/dlog_sd)).
    """
    mean = out[:, :m]
    if shared is None:
        raw = out[:, m : 2 * m]
        sd = floor + _softplus(raw)
    else:
        sd = shared[0]
    inv = 1.0 / sd
    r = (v - mean) * inv
    ll = -LOG_SQRT_2PI - np.log(sd) - 0.5 * r * r
    d_out = np.empty_like(out)
    d_out[:, :m] = r * inv
    d_sd = (r * r - 1.0) * inv
    if shared is None:
        d_out[:, m : 2 * m] = d_sd * _sigmoid(raw)
        return ll.sum(axis=1), d_out, None
    return ll.sum(axis=1), d_out, d_sd * shared[1]


def _bern_head(out, v):
    ll = v * out - _softplus(out)
    return ll.sum(axis=1), v - _sigmoid(out)


class _Batch:
    __slots__ = ("x", "t", "y")

    def __init__(self, data: Dataset, idx=None):
        if idx is None:
            self.x, self.t, self.y = data.x, data.t, data.y
        else:
            self.x, self.t, self.y = data.x[idx], data.t[idx], data.y[idx]


def _decoders(model: CevaeModel, z, t, x, y, weights_x, weights_ty, grad, need_grad):
    """Decoder log-likelihoods at latent rows ``z`` and their backward pass.

    ``weights_*`` are per-row multipliers of each row's log-likelihood in
    the objective; returns (ll_x, ll_t, ll_y, dz) with dz the gradient of the
    weighted objective with respect to ``z``.
    """
    floor = model.config.sd_floor
    lls = {}
    dz = np.zeros_like(z) if need_grad else None
    for name, inp, target, w in (
        ("dx", z, x, weights_x),
        ("dt", z, t[:, None], weights_ty),
        ("dy", np.column_stack([z, t]), y[:, None], weights_ty),
    ):
        out, tape = forward(model.specs[name], model.nets[name], inp)
        m = target.shape[1]
        if model.binary:
            ll, d_out = _bern_head(out, target)
            d_log_sd = None
        else:
            shared = model._shared_sd(name) if model.shared_sd[name] else None
            ll, d_out, d_log_sd = _gauss_head(out, target, m, shared, floor)
        lls[name] = ll
        if not need_grad:
            continue
        d_out *= w[:, None]
        _, d_in = backward(tape, d_out, grad_out=grad[model._slices[name]], input_grad=True)
        dz += d_in[:, : z.shape[1]]
        if d_log_sd is not None:
            grad[model._slices["sd_" + name]] = (d_log_sd * w[:, None]).sum(axis=0)
    return lls["dx"], lls["dt"], lls["dy"], dz


def elbo_batch(
    model: CevaeModel,
    batch,
    proxy_scale: float,
    kl_weight: float,
    stream: StreamLike,
    need_grad: bool = True,
    eps: Optional[np.ndarray] = None,
) -> ElboTrace:
    """Mean over the batch of
    proxy_scale * E_q[log p(x|z)] + E_q[log p(t|z)] + E_q[log p(y|z,t)] - kl_weight * KL[q || p(z)].

    Gaussian latents use one reparameterised draw per row (``eps`` may fix
    it); the binary latent takes the exact expectation over z in {0, 1}.
    """
    if isinstance(batch, Dataset):
        batch = _Batch(batch.observed())
    if proxy_scale < 0 or kl_weight < 0:
        raise ValueError("proxy_scale and kl_weight must be >= 0")
    B = batch.x.shape[0]
    if B == 0:
        raise ValueError("empty batch")
    grad = np.zeros(model.params.size) if need_grad else None
    g = 1.0 / B
    if model.binary_latent:
        trace = _elbo_binary_latent(model, batch, proxy_scale, kl_weight, grad, g, need_grad)
    else:
        trace = _elbo_gaussian(model, batch, proxy_scale, kl_weight, stream, grad, g, need_grad, eps)
    for term in ("x_term", "t_term", "y_term", "kl_term", "value"):
        if not np.isfinite(getattr(trace, term)):
            raise NonFiniteError(f"non-finite ELBO ({term})", term=term)
    return trace


def _elbo_gaussian(model, b, lam, klw, stream, grad, g, need_grad, eps):
    mu, sd, (enc_tape, enc_out) = model.encode(b.x, b.t, b.y)
    if eps is None:
        eps = as_generator(stream).standard_normal(mu.shape)
    z = mu + sd * eps
    B = mu.shape[0]
    wx = np.full(B, lam * g)
    wty = np.full(B, g)
    ll_x, ll_t, ll_y, dz = _decoders(model, z, b.t, b.x, b.y, wx, wty, grad, need_grad)
    kl_rows = (0.5 * (sd * sd + mu * mu) - np.log(sd) - 0.5).sum(axis=1)
    value = np.mean(lam * ll_x + ll_t + ll_y - klw * kl_rows)
    trace = ElboTrace(value, ll_x.mean(), ll_t.mean(), ll_y.mean(), kl_rows.mean(), grad)
    if not need_grad:
        return trace
    d_mu = dz - klw * g * mu
    d_sd = dz * eps - klw * g * (sd - 1.0 / sd)
    d = model.d
    d_enc = np.empty_like(enc_out)
    d_enc[:, :d] = d_mu
    if model.shared_sd["enc"]:
        _, dsd_dlog = model._shared_sd("enc")
        grad[model._slices["sd_enc"]] = d_sd.sum(axis=0) * dsd_dlog
    else:
        d_enc[:, d:] = d_sd * _sigmoid(enc_out[:, d:])
    backward(enc_tape, d_enc, grad_out=grad[model._slices["enc"]], input_grad=False)
    return trace


def _elbo_binary_latent(model, b, lam, klw, grad, g, need_grad):
    q, (enc_tape, enc_out) = model.encode(b.x, b.t, b.y)
    a = enc_out[:, 0]
    B = q.size
    c = model.block("prior")[0]
    z = np.concatenate([np.zeros(B), np.ones(B)])[:, None]
    tt = np.concatenate([b.t, b.t])
    xx = np.vstack([b.x, b.x])
    yy = np.concatenate([b.y, b.y])
    w = np.concatenate([1.0 - q, q]) * g
    ll_x, ll_t, ll_y, _ = _decoders(model, z, tt, xx, yy, lam * w, w, grad, need_grad)
    L = lam * ll_x + ll_t + ll_y
    L0, L1 = L[:B], L[B:]
    log_q, log_1q = -_softplus(-a), -_softplus(a)
    log_pi, log_1pi = -_softplus(-c), -_softplus(c)
    kl_rows = q * (log_q - log_pi) + (1.0 - q) * (log_1q - log_1pi)
    value = np.mean((1.0 - q) * L0 + q * L1 - klw * kl_rows)
    mix = lambda v: (1.0 - q) * v[:B] + q * v[B:]  # noqa: E731
    trace = ElboTrace(value, mix(ll_x).mean(), mix(ll_t).mean(), mix(ll_y).mean(), kl_rows.mean(), grad)
    if not need_grad:
        return trace
    d_a = g * q * (1.0 - q) * (L1 - L0 - klw * (a - c))
    backward(enc_tape, d_a[:, None], grad_out=grad[model._slices["enc"]], input_grad=False)
    pi = _sigmoid(c)
    grad[model._slices["prior"]] = -klw * g * np.sum(pi - q)
    return trace


# Training -------------------------------------------------------------------


@dataclass
class TrainReport:
    epochs: list = field(default_factory=list)  # dicts per epoch
    wall_clock: float = 0.0
    seed: tuple = ()
    config: dict = field(default_factory=dict)

    def column(self, key) -> np.ndarray:
        return np.array([e[key] for e in self.epochs])

    @property
    def final_elbo(self) -> float:
        return self.epochs[-1]["elbo"] if self.epochs else float("nan")

    def to_csv(self, path) -> None:
        cols = [
            "epoch", "elbo", "x_term_unscaled", "t_term", "y_term", "kl_term", "x_term_scaled", "kl_weight", "elbo_se",
        ]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(cols)
            for e in self.epochs:
                w.writerow([e[c] if c == "epoch" else repr(float(e[c])) for c in cols])


def check_schema(config: CevaeConfig, dataset: Dataset) -> bool:
    binary = dataset.is_binary
    if binary and config.variant == "linear":
        raise SchemaError("the linear variant needs continuous data")
    kinds = set(dataset.schema.values())
    if len(kinds) != 1:
        raise SchemaError(f"mixed variable kinds are not supported: {dataset.schema}")
    return binary


def train(
    config: CevaeConfig,
    dataset: Dataset,
    stream: StreamLike,
    init: Optional[CevaeModel] = None,
    callback=None,
):
    """Minibatch Adam ascent of the ELBO; returns ``(model, report)``."""
    data = dataset.observed()
    binary = check_schema(config, data)
    if isinstance(stream, RandomStream):
        init_rng = stream.child("init").generator()
        rng = stream.child("train").generator()
    else:
        rng = as_generator(stream)
        init_rng = rng
    if init is None:
        model = CevaeModel(config, data.k, binary, init_rng)
    else:
        model = init.copy()
        model.config = config
    n = data.n
    bs = min(config.batch_size, n)
    n_batches = math.ceil(n / bs)
    state = AdamState(model.params.size, ExpSchedule(config.lr_start, config.lr_end, config.epochs * n_batches))
    report = TrainReport(seed=_stream_meta(stream), config=config.to_dict())
    t0 = time.perf_counter()
    lam = config.proxy_scale
    for epoch in range(config.epochs):
        perm = rng.permutation(n)
        sums = np.zeros(6)
        batch_vals = []
        for bi in range(n_batches):
            idx = perm[bi * bs : (bi + 1) * bs]
            klw = config.kl_weight(epoch + bi / n_batches)
            try:
                tr = elbo_batch(model, _Batch(data, idx), lam, klw, rng)
                adam_step(state, model.params, -tr.grad)
            except NonFiniteError as exc:
                exc.epoch, exc.batch = epoch, bi
                raise NonFiniteError(f"{exc} at epoch {epoch}, batch {bi}", term=exc.term, epoch=epoch, batch=bi) from None
            w = idx.size
            sums += w * np.array([tr.value, tr.x_term, tr.t_term, tr.y_term, tr.kl_term, klw])
            batch_vals.append(tr.value)
        means = sums / n
        se = float(np.std(batch_vals, ddof=1) / math.sqrt(len(batch_vals))) if len(batch_vals) > 1 else 0.0
        report.epochs.append(
            {
                "epoch": epoch,
                "elbo": means[0],
                "x_term_unscaled": means[1],
                "x_term_scaled": lam * means[1],
                "t_term": means[2],
                "y_term": means[3],
                "kl_term": means[4],
                "kl_weight": means[5],
                "elbo_se": se,
            }
        )
        if callback is not None:
            callback(epoch, model, report)
    report.wall_clock = time.perf_counter() - t0
    return model, report


def _stream_meta(stream) -> tuple:
    if isinstance(stream, RandomStream):
        return (stream.seed, stream.substream_id)
    if isinstance(stream, int):
        return (stream, 0)
    return ()


def evaluate_elbo(model: CevaeModel, dataset: Dataset, stream: StreamLike, proxy_scale=None, kl_weight=1.0, n_samples=1):
    """Full-data ELBO averaged over ``n_samples`` latent draws."""
    lam = model.config.proxy_scale if proxy_scale is None else proxy_scale
    rng = as_generator(stream)
    traces = [elbo_batch(model, dataset, lam, kl_weight, rng, need_grad=False) for _ in range(n_samples)]
    keys = ("value", "x_term", "t_term", "y_term", "kl_term")
    return ElboTrace(*(float(np.mean([getattr(tr, k) for tr in traces])) for k in keys))


# Causal read-outs -------------------------------------------------------------


def estimate_do(model: CevaeModel, t_values=None, n_z: Optional[int] = None, stream: StreamLike = 0):
    """p_theta(y|do(t)) = E_{p(z)} p_theta(y|z,t).

    Gaussian latents: Monte Carlo mixture over ``n_z`` prior draws.  Binary
    latent: the exact two-component mixture.  Binary outcomes collapse to a
    table of p(y=1|do(t)) for t in {0, 1}.
    """
    n_z = model.config.n_z if n_z is None else n_z
    if n_z < 1:
        raise ValueError("n_z must be >= 1")
    if model.binary_latent:
        pi = model.prior_prob()
        zs = np.array([[0.0], [1.0]])
        weights = np.array([1.0 - pi, pi])
    else:
        zs = as_generator(stream).standard_normal((n_z, model.d))
        weights = np.full(n_z, 1.0 / n_z)
    K = zs.shape[0]

    def component_fn(t):
        t = np.asarray(t, dtype=float)
        zz = np.tile(zs, (t.size, 1))
        tt = np.repeat(t, K)
        mean, sd = model.decode_y(zz, tt)
        if sd is None:
            return mean.reshape(t.size, K), None
        return mean.reshape(t.size, K), sd.reshape(t.size, K)

    if model.binary:
        p1, _ = component_fn(np.array([0.0, 1.0]))
        return DiscreteDo(tuple(p1 @ weights))
    dist = MixtureDo(component_fn, weights)
    if t_values is not None:
        t_values = np.asarray(t_values, dtype=float)
        means, sds = component_fn(t_values)
        return MixtureDo.from_table(t_values, means, sds, weights)
    return dist


def linear_do(model: CevaeModel) -> GaussianLinearDo:
    """Closed form for a Gaussian latent with a linear, shared-sd outcome head."""
    if model.binary_latent or model.binary or not model.shared_sd["dy"]:
        raise ContractError("closed-form p(y|do(t)) needs a Gaussian latent and a linear Gaussian y head")
    W = model.nets["dy"]["W0"][:, 0]
    b = model.nets["dy"]["b0"][0]
    s_y, _ = model._shared_sd("dy")
    gz, gt = W[: model.d], W[model.d]
    return GaussianLinearDo(float(gt), float(math.sqrt(s_y[0] ** 2 + gz @ gz)), float(b))


def extract_cyt(model: CevaeModel) -> float:
    """t-coefficient of a linear outcome decoder."""
    if model.config.y_head != "linear":
        raise ContractError("extract_cyt requires a linear y head")
    return float(model.nets["dy"]["W0"][model.d, 0])


def latent_activity(model: CevaeModel, dataset: Dataset) -> np.ndarray:
    """Variance over the data of each encoder-mean coordinate."""
    if model.binary_latent:
        raise ContractError("latent activity is defined for Gaussian latents")
    data = dataset.observed()
    mu, _, _ = model.encode(data.x, data.t, data.y)
    return mu.var(axis=0)


def active_dims(scores, threshold: float = 0.01) -> int:
    return int(np.sum(np.asarray(scores) > threshold))


def set_custom_init(model: CevaeModel, params) -> CevaeModel:
    """Load explicit parameters (a ParamSet, flat vector or block dict) into ``model``."""
    if isinstance(params, dict):
        for name, value in params.items():
            target = model.params[name]
            value = np.asarray(value, dtype=float)
            if value.shape != target.shape:
                raise ShapeError(f"block {name!r} has shape {target.shape}, got {value.shape}")
            target[...] = value
    else:
        flat = params.flat if isinstance(params, ParamSet) else np.asarray(params, dtype=float)
        if isinstance(params, ParamSet) and params.layout != model.params.layout:
            raise ShapeError("parameter layout does not match the model")
        if flat.shape != model.params.flat.shape:
            raise ShapeError(f"expected {model.params.size} parameters, got {flat.size}")
        model.params.flat[...] = flat
    model.params.bump()
    return model


# Constructed initialisations for the linear variant ------------------------


def _linear_blocks(loadings_x, loading_t, y_z, y_t, sd_x, sd_t, sd_y):
    """Decoder blocks of a linear CEVAE from generative loadings."""
    d = loading_t.size
    return {
        "dx/W0": np.asarray(loadings_x, dtype=float).T.reshape(d, -1),
        "dt/W0": np.asarray(loading_t, dtype=float).reshape(d, 1),
        "dy/W0": np.append(y_z, y_t).reshape(d + 1, 1),
    }, (np.asarray(sd_x, float), float(sd_t), float(sd_y))


def linear_model_from_generative(config, loadings_x, loading_t, y_z, y_t, sd_x, sd_t, sd_y) -> CevaeModel:
    """Linear CEVAE whose decoder is the given linear-Gaussian model and
    whose encoder is the optimal diagonal Gaussian posterior for it."""
    loadings_x = np.atleast_2d(np.asarray(loadings_x, dtype=float))  # (k, d)
    loading_t = np.asarray(loading_t, dtype=float).reshape(-1)
    y_z = np.asarray(y_z, dtype=float).reshape(-1)
    k, d = loadings_x.shape
    if config.variant != "linear" or config.latent_dim != d:
        raise ShapeError(f"config must be a linear variant with latent_dim={d}")
    model = CevaeModel(config, k, False, 0)
    blocks, (sx, st, sy) = _linear_blocks(loadings_x, loading_t, y_z, y_t, sd_x, sd_t, sd_y)
    # observed o = (x, t, y) = A z + N e with e standard normal
    A = np.vstack([loadings_x, loading_t, y_z + y_t * loading_t])
    N = np.zeros((k + 2, k + 2))
    N[:k, :k] = np.diag(sx)
    N[k, k] = st
    N[k + 1, k] = y_t * st
    N[k + 1, k + 1] = sy
    c_oo = A @ A.T + N @ N.T
    gain = np.linalg.solve(c_oo, A).T  # E[z|o] = gain @ o
    post_cov = np.eye(d) - gain @ A
    post_prec = np.linalg.inv(post_cov)
    q_sd = np.sqrt(1.0 / np.diag(post_prec))
    floor = config.sd_floor
    blocks.update(
        {
            "enc/W0": gain.T,
            "enc/b0": np.zeros(d),
            "sd_enc/log_sd": np.log(q_sd - floor),
            "dx/b0": np.zeros(k),
            "dt/b0": np.zeros(1),
            "dy/b0": np.zeros(1),
            "sd_dx/log_sd": np.log(sx - floor),
            "sd_dt/log_sd": np.array([math.log(st - floor)]),
            "sd_dy/log_sd": np.array([math.log(sy - floor)]),
        }
    )
    return set_custom_init(model, blocks)


def true_linear_init(config: CevaeConfig, p: LinearGaussianParams) -> CevaeModel:
    """Linear CEVAE placed at the data-generating parameters (extra latent dims unused)."""
    d = config.latent_dim
    lx = np.zeros((2, d))
    lx[:, 0] = (p.c1, p.c2)
    lt = np.zeros(d)
    lt[0] = p.c_t
    yz = np.zeros(d)
    yz[0] = p.c_yz
    return linear_model_from_generative(config, lx, lt, yz, p.c_yt, (p.sigma_x1, p.sigma_x2), p.sigma_t, p.sigma_y)


@dataclass(frozen=True)
class SplitInit:
    t_loading_z2: float
    y_loading_z2: float
    c_yt_model: float
    sigma_t_model: float
    sigma_y_model: float
    model: CevaeModel = field(repr=False, compare=False)


def split_init_2d(config: CevaeConfig, p: LinearGaussianParams, t_loading_z2: float, y_loading_z2: float) -> SplitInit:
    """2-D linear CEVAE whose marginal over (x, t, y) equals the true one but
    whose outcome coefficient on t is wrong.

    Proxies load on z1 only; t and y additionally load on z2.  With
    a = t_loading_z2 and g = y_loading_z2, matching all covariances forces
    c_yt' = c_yt - a g / sigma_t^2 and sigma_t'^2 = sigma_t^2 - a^2.
    """
    a, g2 = t_loading_z2, y_loading_z2
    st2 = p.sigma_t**2 - a**2
    if st2 <= 0:
        raise ValueError("t_loading_z2 must be smaller than sigma_t")
    gyt = p.c_yt - a * g2 / p.sigma_t**2
    g1 = p.c_yz + (p.c_yt - gyt) * p.c_t
    lt = np.array([p.c_t, a])
    gz = np.array([g1, g2])
    var_y_true = p.c_t**2 * p.c_yt**2 + 2 * p.c_t * p.c_yt * p.c_yz + p.c_yt**2 * p.sigma_t**2 + p.c_yz**2 + p.sigma_y**2
    load_y = gz + gyt * lt
    sy2 = var_y_true - load_y @ load_y - gyt**2 * st2
    if sy2 <= 0:
        raise ValueError("split leaves no outcome noise; choose smaller loadings")
    lx = np.array([[p.c1, 0.0], [p.c2, 0.0]])
    model = linear_model_from_generative(
        config, lx, lt, gz, gyt, (p.sigma_x1, p.sigma_x2), math.sqrt(st2), math.sqrt(sy2)
    )
    return SplitInit(a, g2, gyt, math.sqrt(st2), math.sqrt(sy2), model)


def search_split_init(config: CevaeConfig, p: LinearGaussianParams, min_error: float = 0.2, grid: int = 25) -> SplitInit:
    """Grid search for a valid split whose c_yt error is at least ``min_error``,
    preferring the split that keeps the most outcome noise."""
    best = None
    for a in np.linspace(0.05, 0.9, grid) * p.sigma_t:
        for g2 in np.linspace(-2.0, 2.0, 2 * grid + 1):
            if abs(a * g2 / p.sigma_t**2) < min_error:
                continue
            try:
                cand = split_init_2d(config, p, float(a), float(g2))
            except ValueError:
                continue
            if best is None or cand.sigma_y_model > best.sigma_y_model:
                best = cand
    if best is None:
        raise ValueError("no valid split found for this process")
    return best
