import importlib
import json

import numpy as np
import pytest

from proxyrestore.errors import NonFiniteError, ShapeError, TapeMismatchError
from proxyrestore.nn import AdamState, ExpSchedule, MlpSpec, ParamSet, adam_step, backward, backend, forward, init_params
from proxyrestore.nn import _core_py
from proxyrestore.nn.mlp import elu
from proxyrestore.numerics import RandomStream

try:
    from proxyrestore.nn import _core
except ImportError:  # pragma: no cover - extension not built
    _core = None

# every network shape the CEVAE variants build (k=2 or 4 proxies, latent 1/2/10)
CEVAE_SPECS = [
    MlpSpec(4, 20), MlpSpec(6, 20), MlpSpec(10, 4), MlpSpec(1, 4), MlpSpec(2, 8), MlpSpec(10, 2), MlpSpec(11, 2),
    MlpSpec(11, 1, 0, 1, "identity"), MlpSpec(4, 1, 0, 1, "identity"), MlpSpec(2, 2, 0, 1, "identity"),
    MlpSpec(4, 1), MlpSpec(2, 1),
]


def reference_forward(spec, params, x):
    h = x
    n = len(spec.layout()) // 2
    for l in range(n):
        h = h @ params[f"W{l}"] + params[f"b{l}"]
        if l < n - 1 and spec.activation == "elu":
            h = np.where(h > 0, h, np.exp(h) - 1)
    return h


def random_params(spec, seed, scale=0.5):
    ps = ParamSet(spec.layout())
    ps.flat[:] = np.random.default_rng(seed).normal(0, scale, ps.size)
    return ps


def test_zero_params_give_zero_outputs():
    spec = MlpSpec(3, 2)
    out, _ = forward(spec, ParamSet(spec.layout()), np.ones((4, 3)))
    assert np.all(out == 0)


@pytest.mark.parametrize("spec", CEVAE_SPECS)
def test_forward_matches_reference(spec):
    p = random_params(spec, 1)
    x = np.random.default_rng(2).normal(size=(7, spec.input_dim))
    out, _ = forward(spec, p, x)
    assert np.allclose(out, reference_forward(spec, p, x), atol=1e-12)


def test_single_vector_input():
    spec = MlpSpec(3, 2)
    p = random_params(spec, 0)
    out, _ = forward(spec, p, np.array([0.1, 0.2, 0.3]))
    assert out.shape == (1, 2)


def test_forward_shape_error_names_layer():
    spec = MlpSpec(3, 2)
    with pytest.raises(ShapeError, match="layer 0"):
        forward(spec, init_params(spec, 0), np.ones((2, 4)))
    with pytest.raises(ShapeError):
        forward(spec, ParamSet([("w", (3,))]), np.ones((2, 3)))


@pytest.mark.parametrize("spec", CEVAE_SPECS)
def test_gradient_matches_finite_differences(spec):
    p = random_params(spec, 3)
    rng = np.random.default_rng(4)
    # inputs straddle zero so ELU kinks are exercised on both sides
    x = rng.normal(size=(5, spec.input_dim))
    g_out = rng.normal(size=(5, spec.output_heads))
    out, tape = forward(spec, p, x)
    grads, dx = backward(tape, g_out)
    idx = rng.choice(p.size, size=min(50, p.size), replace=False)
    h = 1e-5
    for i in idx:
        old = p.flat[i]
        p.flat[i] = old + h
        fp = np.sum(g_out * forward(spec, p, x)[0])
        p.flat[i] = old - h
        fm = np.sum(g_out * forward(spec, p, x)[0])
        p.flat[i] = old
        num = (fp - fm) / (2 * h)
        assert abs(num - grads.flat[i]) <= 1e-4 * max(1.0, abs(num))
    for j in range(spec.input_dim):
        e = np.zeros_like(x)
        e[:, j] = h
        num = (np.sum(g_out * forward(spec, p, x + e)[0]) - np.sum(g_out * forward(spec, p, x - e)[0])) / (2 * h)
        assert abs(num - dx[:, j].sum()) <= 1e-4 * max(1.0, abs(num))


def test_zero_output_grads_give_zero_gradient():
    spec = MlpSpec(3, 2)
    _, tape = forward(spec, random_params(spec, 0), np.ones((4, 3)))
    g, dx = backward(tape, np.zeros((4, 2)))
    assert np.all(g.flat == 0) and np.all(dx == 0)


def test_linear_network_gradient_is_outer_product():
    spec = MlpSpec(3, 2, 0, 1, "identity")
    x = np.array([[1.0, -2.0, 0.5]])
    g_out = np.array([[0.3, -1.2]])
    _, tape = forward(spec, random_params(spec, 0), x)
    g, _ = backward(tape, g_out)
    assert np.array_equal(g["W0"], np.outer(x[0], g_out[0]))
    assert np.array_equal(g["b0"], g_out[0])


def test_stale_tape_rejected():
    spec = MlpSpec(3, 2)
    p = init_params(spec, 0)
    _, tape = forward(spec, p, np.ones((2, 3)))
    p.bump()
    with pytest.raises(TapeMismatchError):
        backward(tape, np.ones((2, 2)))


def test_child_views_share_version():
    root = ParamSet.concat({"a": init_params(MlpSpec(2, 1), 0), "b": init_params(MlpSpec(1, 1), 1)})
    child = root.child("a")
    _, tape = forward(MlpSpec(2, 1), child, np.ones((1, 2)))
    root.bump()
    with pytest.raises(TapeMismatchError):
        backward(tape, np.ones((1, 1)))
    child["b0"][...] = 7.0
    assert root["a/b0"][0] == 7.0


@pytest.mark.skipif(_core is None, reason="compiled kernels not built")
@pytest.mark.parametrize("spec", CEVAE_SPECS)
def test_backends_agree(spec):
    p = random_params(spec, 5)
    rng = np.random.default_rng(6)
    x = rng.normal(size=(33, spec.input_dim))
    d_out = rng.normal(size=(33, spec.output_heads))
    dims = spec.dims
    res = []
    for mod in (_core, _core_py):
        acts = np.empty(33 * int(dims[1:].sum()))
        mod.mlp_forward(p.flat, dims, x, acts, spec.act_code)
        grad = np.full(p.size, np.nan)
        dx = np.empty_like(x)
        mod.mlp_backward(p.flat, dims, x, acts, d_out, grad, dx, spec.act_code)
        res.append((acts, grad, dx))
    for a, b in zip(*res):
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_backend_env_override(monkeypatch):
    from proxyrestore.nn import backend as be

    monkeypatch.setenv("PROXYRESTORE_BACKEND", "python")
    forced = importlib.reload(be)
    assert forced.NAME == "python"
    monkeypatch.delenv("PROXYRESTORE_BACKEND")
    restored = importlib.reload(be)
    assert restored.NAME == ("compiled" if _core is not None else "python")


def test_forward_deterministic():
    spec = MlpSpec(5, 4)
    p = init_params(spec, 9)
    x = np.random.default_rng(0).normal(size=(20, 5))
    assert np.array_equal(forward(spec, p, x)[0], forward(spec, p, x)[0])


def test_init_reproducible_and_glorot_variance():
    spec = MlpSpec(30, 30, 0, 1, "identity")
    a = init_params(spec, RandomStream(4))
    assert np.array_equal(a.flat, init_params(spec, RandomStream(4)).flat)
    ws = np.concatenate([init_params(spec, RandomStream(4, i))["W0"].ravel() for i in range(12)])
    assert ws.size >= 10**4
    assert ws.var() == pytest.approx(2 / 60, rel=0.1)
    assert np.all(a["b0"] == 0)


def test_fan_in_init_range():
    spec = MlpSpec(25, 3)
    p = init_params(spec, 0, "fan_in")
    assert np.abs(p["W0"]).max() <= 0.2 and np.abs(p["b0"]).max() <= 0.2
    assert np.any(p["b0"] != 0)
    with pytest.raises(ValueError):
        init_params(spec, 0, "orthogonal")


def test_paramset_round_trips():
    p = init_params(MlpSpec(3, 2), 1)
    assert np.array_equal(ParamSet.from_flat(p.layout, p.to_flat()).flat, p.flat)
    back = ParamSet.from_json(p.to_json({"spec": "x"}))
    assert back.layout == p.layout and np.array_equal(back.flat, p.flat)
    assert json.loads(p.to_json({"spec": "x"}))["header"] == {"spec": "x"}
    with pytest.raises(ShapeError):
        ParamSet(p.layout, np.zeros(3))


def test_elu():
    assert np.allclose(elu([-1.0, 0.0, 2.0]), [np.expm1(-1.0), 0.0, 2.0])


def reference_adam(theta, grads, lr_fn, b1=0.9, b2=0.999, eps=1e-8):
    m = v = 0.0
    out = []
    for t, g in enumerate(grads, start=1):
        m = b1 * m + (1 - b1) * g
        v = b2 * v + (1 - b2) * g * g
        m_hat = m / (1 - b1**t)
        v_hat = v / (1 - b2**t)
        theta = theta - lr_fn(t - 1) * m_hat / (np.sqrt(v_hat) + eps)
        out.append(theta)
    return out


def test_adam_matches_reference():
    sched = ExpSchedule(0.01, 0.001, 50)
    grads = list(np.random.default_rng(1).normal(size=50))
    ref = reference_adam(1.5, grads, sched)
    p = np.array([1.5])
    state = AdamState(1, sched)
    for g, r in zip(grads, ref):
        adam_step(state, p, np.array([g]))
        assert p[0] == pytest.approx(r, rel=1e-12, abs=1e-15)
    assert state.step == 50


def test_adam_first_step_constant_gradient():
    p = np.array([0.0])
    adam_step(AdamState(1, ExpSchedule(0.1, 0.1, 10)), p, np.array([1.0]))
    assert p[0] == pytest.approx(-0.1, rel=1e-6)


def test_adam_zero_gradient_and_non_finite():
    spec = MlpSpec(2, 1)
    p = init_params(spec, 0)
    before = p.to_flat()
    state = AdamState(p.size, ExpSchedule(0.01, 0.001, 10))
    adam_step(state, p, p.zeros_like())
    assert np.array_equal(p.flat, before) and state.step == 1
    bad = p.zeros_like()
    bad.flat[0] = np.nan
    with pytest.raises(NonFiniteError) as info:
        adam_step(state, p, bad)
    assert info.value.step == 1
    with pytest.raises(ShapeError):
        adam_step(state, p, np.zeros(2))


def test_adam_minimises_quadratic():
    target = np.array([1.0, -2.0, 3.0])
    p = np.zeros(3)
    state = AdamState(3, ExpSchedule(0.1, 0.001, 2000))
    for _ in range(2000):
        adam_step(state, p, 2 * (p - target))
    assert np.allclose(p, target, atol=1e-3)


def test_schedule_endpoints():
    s = ExpSchedule(0.01, 0.001, 100)
    assert s(0) == 0.01
    assert s(100) == pytest.approx(0.001)
    assert s(50) == pytest.approx(0.01 * 0.1**0.5)
    with pytest.raises(ValueError):
        ExpSchedule(0.0, 0.1, 10)


def test_backend_name():
    assert backend.NAME in ("compiled", "python")
