import math

import numpy as np
import pytest
from scipy import stats

from proxyrestore.cevae import (
    CevaeConfig,
    CevaeModel,
    TrainReport,
    _Batch,
    active_dims,
    elbo_batch,
    estimate_do,
    evaluate_elbo,
    extract_cyt,
    latent_activity,
    linear_do,
    search_split_init,
    set_custom_init,
    split_init_2d,
    train,
    true_linear_init,
)
from proxyrestore.datagen import MAIN_BINARY, MAIN_LINGAUSS, Dataset, generate, population_cov_lingauss
from proxyrestore.errors import ContractError, NonFiniteError, SchemaError, ShapeError
from proxyrestore.interventional import GaussianLinearDo
from proxyrestore.metrics import AidSpec, aid
from proxyrestore.numerics import LOG_SQRT_2PI, RandomStream

FLOOR = CevaeConfig().sd_floor
UNIT_SD = math.log(1.0 - FLOOR)  # log_sd giving a shared sd of exactly 1

SMALL = dict(hidden_width=6, latent_dim=3)
VARIANT_CASES = [
    ("full", False, CevaeConfig(**SMALL)),
    ("full-linear-y", False, CevaeConfig(y_head="linear", **SMALL)),
    ("linear", False, CevaeConfig(variant="linear", latent_dim=2)),
    ("full-binary", True, CevaeConfig(**SMALL)),
    ("binary-latent", True, CevaeConfig(variant="binary-latent", hidden_width=6)),
]


def small_data(binary, n=12, seed=0):
    proc = MAIN_BINARY if binary else MAIN_LINGAUSS
    return generate(proc, n, RandomStream(seed)).observed()


def test_config_normalisation():
    assert CevaeConfig(variant="binary-latent").latent_dim == 1
    assert CevaeConfig(variant="linear").y_head == "linear"
    with pytest.raises(ValueError):
        CevaeConfig(variant="deep")
    with pytest.raises(ValueError):
        CevaeConfig(proxy_scale=-1.0)


def test_kl_schedule():
    c = CevaeConfig(kl_anneal_start=0.05, kl_ramp_epochs=100)
    assert c.kl_weight(0) == 0.05
    assert c.kl_weight(50) == pytest.approx(0.525)
    assert c.kl_weight(100) == 1.0 and c.kl_weight(250) == 1.0
    assert CevaeConfig().kl_weight(0) == 1.0


def test_prior_encoder_has_zero_kl():
    model = CevaeModel(CevaeConfig(), 2, False, 0)
    model.block("enc")[:] = 0.0
    model.nets["enc"]["b2"][10:] = math.log(math.expm1(1.0 - FLOOR))
    tr = elbo_batch(model, small_data(False), 1.0, 1.0, 0)
    assert tr.kl_term == pytest.approx(0.0, abs=1e-12)


def test_hand_built_single_point():
    model = CevaeModel(CevaeConfig(variant="linear", latent_dim=1), 2, False, 0)
    set_custom_init(
        model,
        {
            "enc/W0": np.zeros((4, 1)), "enc/b0": [0.3], "sd_enc/log_sd": [UNIT_SD],
            "dx/W0": [[1.0, -1.0]], "dx/b0": [0.0, 0.0], "sd_dx/log_sd": [UNIT_SD, UNIT_SD],
            "dt/W0": [[2.0]], "dt/b0": [0.0], "sd_dt/log_sd": [UNIT_SD],
            "dy/W0": [[1.0], [0.5]], "dy/b0": [0.0], "sd_dy/log_sd": [UNIT_SD],
        },
    )
    d = Dataset(np.array([[1.0, 2.0]]), [0.5], [-1.0])
    tr = elbo_batch(model, d, 1.0, 1.0, 0, eps=np.array([[0.5]]))
    # z = 0.3 + 0.5 = 0.8; x means (0.8, -0.8); t mean 1.6; y mean 0.8 + 0.25
    x_term = -2 * LOG_SQRT_2PI - 0.5 * (0.2**2 + 2.8**2)
    t_term = -LOG_SQRT_2PI - 0.5 * 1.1**2
    y_term = -LOG_SQRT_2PI - 0.5 * 2.05**2
    kl = 0.5 * 0.3**2
    assert tr.x_term == pytest.approx(x_term, abs=1e-12)
    assert tr.t_term == pytest.approx(t_term, abs=1e-12)
    assert tr.y_term == pytest.approx(y_term, abs=1e-12)
    assert tr.kl_term == pytest.approx(kl, abs=1e-12)
    assert tr.value == pytest.approx(x_term + t_term + y_term - kl, abs=1e-12)
    half = elbo_batch(model, d, 0.5, 0.0, 0, eps=np.array([[0.5]]))
    assert half.value == pytest.approx(0.5 * x_term + t_term + y_term, abs=1e-12)


def test_zero_proxy_scale_drops_proxy_term():
    model = CevaeModel(CevaeConfig(**SMALL), 2, False, 1)
    d = small_data(False)
    eps = np.random.default_rng(0).normal(size=(d.n, 3))
    full = elbo_batch(model, d, 1.0, 1.0, 0, eps=eps)
    off = elbo_batch(model, d, 0.0, 1.0, 0, eps=eps)
    assert off.value == pytest.approx(off.t_term + off.y_term - off.kl_term, abs=1e-12)
    assert full.value - off.value == pytest.approx(full.x_term, abs=1e-12)
    assert np.all(off.grad[model._slices["dx"]] == 0)


@pytest.mark.parametrize("name,binary,config", VARIANT_CASES, ids=[c[0] for c in VARIANT_CASES])
@pytest.mark.parametrize("lam,klw", [(1.0, 1.0), (0.3, 0.2)])
def test_elbo_gradient_finite_differences(name, binary, config, lam, klw):
    d = small_data(binary)
    model = CevaeModel(config, d.k, binary, 3)
    rng = np.random.default_rng(4)
    # move off the symmetric init so every head has signal
    model.params.flat[:] += rng.normal(0, 0.3, model.params.size)
    model.params.bump()
    eps = rng.normal(size=(d.n, config.latent_dim))
    tr = elbo_batch(model, d, lam, klw, 0, eps=eps)
    idx = rng.choice(model.params.size, size=min(80, model.params.size), replace=False)
    h = 1e-6
    for i in idx:
        old = model.params.flat[i]
        model.params.flat[i] = old + h
        fp = elbo_batch(model, d, lam, klw, 0, need_grad=False, eps=eps).value
        model.params.flat[i] = old - h
        fm = elbo_batch(model, d, lam, klw, 0, need_grad=False, eps=eps).value
        model.params.flat[i] = old
        num = (fp - fm) / (2 * h)
        assert abs(num - tr.grad[i]) <= 1e-4 * max(1.0, abs(num)), (i, num, tr.grad[i])


def test_train_is_deterministic_and_reports_schema():
    d = small_data(False, n=250)
    cfg = CevaeConfig(epochs=3, **SMALL)
    m1, r1 = train(cfg, d, RandomStream(5))
    m2, r2 = train(cfg, d, RandomStream(5))
    assert np.array_equal(m1.params.flat, m2.params.flat)
    assert r1.column("elbo").tolist() == r2.column("elbo").tolist()
    m3, _ = train(cfg, d, RandomStream(6))
    assert not np.array_equal(m1.params.flat, m3.params.flat)
    assert r1.seed == (5, 0) and len(r1.epochs) == 3
    with pytest.raises(SchemaError):
        train(CevaeConfig(variant="linear"), small_data(True), 0)


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_non_finite_elbo_reports_location():
    d = small_data(False, n=50)
    init = CevaeModel(CevaeConfig(**SMALL), 2, False, 0)
    init.block("dy")[:] = np.nan
    with pytest.raises(NonFiniteError) as info:
        train(CevaeConfig(epochs=2, **SMALL), d, 0, init=init)
    assert info.value.epoch == 0 and info.value.batch == 0


def test_train_report_csv(tmp_path):
    _, rep = train(CevaeConfig(epochs=2, **SMALL), small_data(False, n=40), 0)
    rep.to_csv(tmp_path / "r.csv")
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines[0] == "epoch,elbo,x_term_unscaled,t_term,y_term,kl_term,x_term_scaled,kl_weight,elbo_se"
    assert len(lines) == 3
    assert math.isnan(TrainReport().final_elbo)


def test_training_increases_elbo():
    d = generate(MAIN_LINGAUSS, 1000, RandomStream(2)).observed()
    cfg = CevaeConfig(variant="linear", latent_dim=1, epochs=40)
    init = CevaeModel(cfg, 2, False, RandomStream(2, 1))
    model, rep = train(cfg, d, RandomStream(2), init=init)
    before = evaluate_elbo(init, d, 0, n_samples=20).value
    after = evaluate_elbo(model, d, 0, n_samples=20).value
    assert after > before
    elbo = rep.column("elbo")
    assert elbo[-5:].mean() > elbo[:5].mean()


def outcome_only_model(slope, intercept, sd):
    model = CevaeModel(CevaeConfig(y_head="linear", latent_dim=4), 2, False, 0)
    w = np.zeros((5, 1))
    w[4, 0] = slope
    set_custom_init(model, {"dy/W0": w, "dy/b0": [intercept], "sd_dy/log_sd": [math.log(sd - FLOOR)]})
    return model


def test_estimate_do_ignores_latent_when_outcome_does():
    model = outcome_only_model(0.7, 0.2, 0.9)
    est = estimate_do(model, n_z=50)
    truth = GaussianLinearDo(0.7, 0.9, 0.2)
    assert est.mean(np.array([0.0, 1.0])) == pytest.approx([0.2, 0.9], abs=1e-12)
    assert aid(est, truth, np.linspace(-2, 2, 9)) < 1e-8
    assert linear_do(model) == truth


def test_estimate_do_matches_linear_closed_form():
    model = CevaeModel(CevaeConfig(variant="linear", latent_dim=3), 2, False, 7)
    gz = np.array([0.8, -0.4, 0.3])
    set_custom_init(model, {"dy/W0": np.append(gz, -0.6)[:, None], "dy/b0": [0.1], "sd_dy/log_sd": [math.log(0.5)]})
    exact = linear_do(model)
    n_z = 4000
    est = estimate_do(model, n_z=n_z, stream=3)
    se = np.linalg.norm(gz) / math.sqrt(n_z)
    for t in (-1.0, 0.0, 2.0):
        assert abs(est.mean(np.array([t]))[0] - exact.mean(t)) < 3 * se
    means, sds, w = est.components(np.array([0.5]))
    var = np.sum(w * (sds[0] ** 2 + means[0] ** 2)) / w.sum() - est.mean(np.array([0.5]))[0] ** 2
    assert math.sqrt(var) == pytest.approx(exact.sd, rel=0.05)


def test_estimate_do_n_z_doubling_stabilises():
    d = small_data(False, n=300)
    model, _ = train(CevaeConfig(epochs=5, **SMALL), d, RandomStream(1))
    t = d.t[:5]
    a = estimate_do(model, n_z=2000, stream=1)
    b = estimate_do(model, n_z=4000, stream=2)
    assert aid(a, b, t, AidSpec(t_sample_count=5, points=1001)) < 0.05


def test_binary_latent_exact_table():
    cfg = CevaeConfig(variant="binary-latent", hidden_layers=1, hidden_width=3)
    model = CevaeModel(cfg, 2, True, 0)
    # hidden units elu(z), elu(t), elu(z + t - 1); output logit linear in them
    W0 = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 1.0]])
    b0 = np.array([0.0, 0.0, -1.0])
    inputs = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    pre = inputs @ W0 + b0
    h = np.where(pre > 0, pre, np.expm1(pre))
    p_yz = np.array([0.57, 0.17, 0.36, 0.04])  # p(y=1 | z, t) at the rows of ``inputs``
    coef = np.linalg.solve(np.column_stack([h, np.ones(4)]), np.log(p_yz / (1 - p_yz)))
    set_custom_init(
        model,
        {"dy/W0": W0, "dy/b0": b0, "dy/W1": coef[:3, None], "dy/b1": coef[3:], "prior/logit": [math.log(0.56 / 0.44)]},
    )
    do = estimate_do(model)
    assert do.p_y1 == pytest.approx((0.3460, 0.1808), abs=1e-12)
    assert model.prior_prob() == pytest.approx(0.56)


def test_latent_activity_examples():
    d = Dataset(np.sqrt(2) * np.array([[1.0, 3.0], [-1.0, 0.0], [1.0, 2.0], [-1.0, 1.0]]), [0, 1, 0, 1], [1, 2, 3, 4])
    model = CevaeModel(CevaeConfig(variant="linear", latent_dim=2), 2, False, 0)
    model.block("enc")[:] = 0.0
    assert np.all(latent_activity(model, d) == 0) and active_dims(latent_activity(model, d)) == 0
    model.nets["enc"]["W0"][0, 0] = 1.0
    act = latent_activity(model, d)
    assert act == pytest.approx([2.0, 0.0], abs=1e-12)
    assert active_dims(act) == 1
    with pytest.raises(ContractError):
        latent_activity(CevaeModel(CevaeConfig(variant="binary-latent"), 2, True, 0), small_data(True))


def test_extract_cyt():
    model = outcome_only_model(0.46, 0.0, 1.0)
    assert extract_cyt(model) == 0.46
    with pytest.raises(ContractError):
        extract_cyt(CevaeModel(CevaeConfig(), 2, False, 0))
    with pytest.raises(ContractError):
        linear_do(CevaeModel(CevaeConfig(), 2, False, 0))


def test_set_custom_init_round_trip_and_errors():
    a = CevaeModel(CevaeConfig(**SMALL), 2, False, 0)
    b = CevaeModel(CevaeConfig(**SMALL), 2, False, 1)
    set_custom_init(b, a.params)
    assert np.array_equal(a.params.flat, b.params.flat)
    set_custom_init(b, a.params.flat * 2)
    assert np.array_equal(b.params.flat, 2 * a.params.flat)
    with pytest.raises(ShapeError):
        set_custom_init(b, np.zeros(3))
    with pytest.raises(ShapeError):
        set_custom_init(b, {"dy/b2": np.zeros(5)})
    with pytest.raises(ShapeError):
        set_custom_init(b, CevaeModel(CevaeConfig(), 2, False, 0).params)


@pytest.mark.parametrize("name,binary,config", VARIANT_CASES, ids=[c[0] for c in VARIANT_CASES])
def test_checkpoint_round_trip(tmp_path, name, binary, config):
    model = CevaeModel(config, 2, binary, 4)
    model.save(tmp_path / "m.json")
    back = CevaeModel.load(tmp_path / "m.json")
    assert back.config == config and back.binary == binary
    assert np.array_equal(back.params.flat, model.params.flat)
    d = small_data(binary)
    eps = np.random.default_rng(0).normal(size=(d.n, config.latent_dim))
    assert elbo_batch(back, d, 1.0, 1.0, 0, eps=eps).value == elbo_batch(model, d, 1.0, 1.0, 0, eps=eps).value


def implied_cov(model):
    """Covariance of (x1, x2, t, y) under a linear model's decoder."""
    net = model.nets
    sd = lambda name: FLOOR + np.exp(model.block("sd_" + name))  # noqa: E731
    d = model.d
    lx, lt = net["dx"]["W0"].T, net["dt"]["W0"][:, 0]
    gz, gt = net["dy"]["W0"][:d, 0], net["dy"]["W0"][d, 0]
    k = lx.shape[0]
    A = np.vstack([lx, lt, gz + gt * lt])
    N = np.zeros((k + 2, k + 2))
    N[:k, :k] = np.diag(sd("dx"))
    N[k, k] = sd("dt")[0]
    N[k + 1, k] = gt * sd("dt")[0]
    N[k + 1, k + 1] = sd("dy")[0]
    return A @ A.T + N @ N.T


def test_split_init_matches_population_with_wrong_effect():
    cfg = CevaeConfig(variant="linear", latent_dim=2)
    split = search_split_init(cfg, MAIN_LINGAUSS)
    assert abs(split.c_yt_model - MAIN_LINGAUSS.c_yt) >= 0.2
    assert extract_cyt(split.model) == pytest.approx(split.c_yt_model)
    pop = population_cov_lingauss(MAIN_LINGAUSS).entries
    assert np.allclose(implied_cov(split.model), pop, atol=1e-10)
    with pytest.raises(ValueError):
        split_init_2d(cfg, MAIN_LINGAUSS, 5.0, 0.5)


def test_true_init_reproduces_population_and_likelihood():
    cfg = CevaeConfig(variant="linear", latent_dim=1)
    model = true_linear_init(cfg, MAIN_LINGAUSS)
    pop = population_cov_lingauss(MAIN_LINGAUSS).entries
    assert np.allclose(implied_cov(model), pop, atol=1e-12)
    # a one-dimensional posterior is exact, so the ELBO equals the log-likelihood in expectation
    d = generate(MAIN_LINGAUSS, 20000, RandomStream(11)).observed()
    obs = np.column_stack([d.x, d.t, d.y])
    ll = stats.multivariate_normal(np.zeros(4), pop).logpdf(obs)
    rows = []
    for s in range(10):
        rows.append(evaluate_elbo(model, d, s).value)
    se = np.std(rows, ddof=1) / math.sqrt(len(rows))
    assert abs(np.mean(rows) - ll.mean()) < 4 * se + 1e-3
    # the data-generating parameters are a stationary point up to sampling noise
    tr = elbo_batch(model, _Batch(d), 1.0, 1.0, RandomStream(12))
    dec = np.concatenate([tr.grad[model._slices[b]] for b in ("dx", "dt", "dy")])
    shifted = model.copy()
    shifted.nets["dy"]["W0"][1, 0] += 0.3
    shifted.params.bump()
    tr2 = elbo_batch(shifted, _Batch(d), 1.0, 1.0, RandomStream(12))
    dec2 = np.concatenate([tr2.grad[model._slices[b]] for b in ("dx", "dt", "dy")])
    assert np.linalg.norm(dec) < 0.1 * np.linalg.norm(dec2)
