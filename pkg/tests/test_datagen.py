import math

import numpy as np
import pytest

from proxyrestore import datagen
from proxyrestore.datagen import (
    MAIN_BINARY,
    MAIN_LINGAUSS,
    REPEATED_PROXY,
    REPEATED_PROXY_EXACT,
    ROTATED_NOISE,
    BinaryParams,
    Dataset,
    LinearGaussianParams,
    ProcessVariant,
    binary_joint,
    generate,
    population_cov,
    population_cov_lingauss,
    true_do,
)
from proxyrestore.errors import EmptyDatasetError, ParameterDomainError
from proxyrestore.numerics import RandomStream, sample_cov

PROCESS_1 = datagen.LINGAUSS_REPLICATIONS["lingauss_p1"]


def test_process_1_fixture_entries():
    c = population_cov_lingauss(PROCESS_1)
    assert c["x1", "x2"] == pytest.approx(-0.4876, abs=1e-12)
    assert c["t", "t"] == pytest.approx(2.2797, abs=1e-12)
    assert c["x1", "t"] == pytest.approx(-0.5247, abs=1e-12)


def test_closed_form_cov_matches_structural_loadings():
    rng = np.random.default_rng(0)
    for _ in range(50):
        p = datagen.sample_lingauss_params(rng)
        a = population_cov_lingauss(p).entries
        b = population_cov(p).entries
        assert np.allclose(a, b, rtol=1e-12, atol=1e-12)


def test_unconfounded_outcome_has_no_proxy_covariance():
    p = MAIN_LINGAUSS.replace(c_yz=0.0, c_t=0.0)
    assert population_cov_lingauss(p)["x1", "y"] == 0.0


def test_independent_variables_have_zero_sample_cov():
    p = LinearGaussianParams(0, 0, 0, 0, 0, 1, 1, 1, 1)
    d = generate(p, 10**5, RandomStream(3))
    c = sample_cov(np.column_stack([d.x, d.t, d.y])).entries
    off = c[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) < 4 / math.sqrt(d.n))


def test_process_1_sample_cov():
    d = generate(PROCESS_1, 10**6, RandomStream(5))
    assert np.cov(d.x[:, 0], d.t)[0, 1] == pytest.approx(-0.5247, abs=0.01)


def test_generate_is_deterministic_and_keeps_z():
    a = generate(MAIN_LINGAUSS, 100, RandomStream(1, 2))
    b = generate(MAIN_LINGAUSS, 100, RandomStream(1, 2))
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.z_hidden is not None
    assert a.observed().z_hidden is None


def test_generate_rejects_empty():
    with pytest.raises(EmptyDatasetError):
        generate(MAIN_LINGAUSS, 0, 0)


def test_exact_copies_are_bitwise_equal():
    d = generate(REPEATED_PROXY_EXACT, 500, 0)
    assert np.array_equal(d.x[:, 0], d.x[:, 2])
    assert np.array_equal(d.x[:, 1], d.x[:, 3])
    zero_noise = ProcessVariant(REPEATED_PROXY.base, "repeated-proxy", copy_noise_sd=0.0)
    d = generate(zero_noise, 50, 0)
    assert np.array_equal(d.x[:, 0], d.x[:, 2])


def test_noisy_copies_population():
    d = generate(REPEATED_PROXY, 2 * 10**5, RandomStream(9))
    diff = d.x[:, 2] - d.x[:, 0]
    assert diff.std() == pytest.approx(0.1, rel=0.02)


def test_rotation_matrix_orthogonal_and_ordered():
    R = ROTATED_NOISE.rotation()
    assert np.allclose(R @ R.T, np.eye(3))
    assert np.linalg.det(R) == pytest.approx(1.0)
    a = b = g = math.pi / 4
    rz = np.array([[math.cos(a), -math.sin(a), 0], [math.sin(a), math.cos(a), 0], [0, 0, 1]])
    ry = np.array([[math.cos(b), 0, math.sin(b)], [0, 1, 0], [-math.sin(b), 0, math.cos(b)]])
    rx = np.array([[1, 0, 0], [0, math.cos(g), -math.sin(g)], [0, math.sin(g), math.cos(g)]])
    assert np.allclose(R, rz @ ry @ rx)


def test_rotation_leaves_t_y_block_unchanged():
    c_rot = population_cov(ROTATED_NOISE)
    c_base = population_cov_lingauss(ROTATED_NOISE.base)
    for a, b in (("t", "t"), ("t", "y"), ("y", "y")):
        assert c_rot[a, b] == pytest.approx(c_base[a, b], abs=1e-12)
    d = generate(ROTATED_NOISE, 10**5, RandomStream(4))
    assert np.var(d.t, ddof=1) == pytest.approx(c_base["t", "t"], rel=0.03)


def test_true_do_examples():
    do = true_do(MAIN_LINGAUSS)
    assert do.slope == -0.62
    assert do.sd == pytest.approx(math.sqrt(0.48**2 + 0.71**2))
    assert do.sd == pytest.approx(0.8570, abs=1e-4)
    b = true_do(MAIN_BINARY)
    assert b.p_y1[0] == pytest.approx(0.44 * 0.57 + 0.56 * 0.17, abs=1e-12)
    assert b.p_y1[1] == pytest.approx(0.44 * 0.36 + 0.56 * 0.04, abs=1e-12)
    assert np.allclose(b.table.sum(axis=1), 1.0)
    assert true_do(ROTATED_NOISE) == true_do(ROTATED_NOISE.base)


def test_true_do_without_confounding():
    p = MAIN_LINGAUSS.replace(c_yz=0.0)
    assert true_do(p).sd == p.sigma_y


def test_binary_joint_is_distribution_and_matches_samples():
    j = binary_joint(MAIN_BINARY)
    assert j.shape == (2, 2, 2, 2)
    assert j.sum() == pytest.approx(1.0, abs=1e-14)
    d = generate(MAIN_BINARY, 2 * 10**5, RandomStream(2))
    from proxyrestore.analytic import empirical_joint

    emp = empirical_joint(d) / d.n
    assert np.max(np.abs(emp - j)) < 5 * math.sqrt(0.25 / d.n)


def test_lingauss_sampler_reproducible_and_signs():
    a = datagen.sample_lingauss_params(RandomStream(7))
    assert a == datagen.sample_lingauss_params(RandomStream(7))
    rng = RandomStream(8).generator()
    signs = [datagen.sample_lingauss_params(rng).c1 > 0 for _ in range(2000)]
    assert abs(np.mean(signs) - 0.5) < 4 * math.sqrt(0.25 / len(signs))


def test_binary_sampler():
    a = datagen.sample_binary_params(RandomStream(3))
    assert a == datagen.sample_binary_params(RandomStream(3))
    rng = RandomStream(4).generator()
    pz = np.array([datagen.sample_binary_params(rng).p_z for _ in range(4000)])
    assert abs(pz.mean() - 0.5) < 4 * math.sqrt(1 / 20 / pz.size)
    assert pz.min() >= 0.01 and pz.max() <= 0.99


def test_param_validation():
    with pytest.raises(ParameterDomainError):
        LinearGaussianParams(1, 1, 1, 1, 1, 0.0, 1, 1, 1)
    with pytest.raises(ParameterDomainError):
        BinaryParams(0.5, (0.5, 1.0), (0.5, 0.5), (0.5, 0.5), (0.5,) * 4)
    with pytest.raises(ParameterDomainError):
        ProcessVariant(MAIN_LINGAUSS, "twisted")


@pytest.mark.parametrize("name", list(datagen.NAMED_PROCESSES))
def test_process_json_round_trip(name, tmp_path):
    proc = datagen.named_process(name)
    path = tmp_path / "p.json"
    datagen.save_process(proc, path)
    back = datagen.load_process(path)
    assert datagen.process_to_dict(back) == datagen.process_to_dict(proc)


def test_unknown_process_lists_options():
    with pytest.raises(KeyError, match="main_lingauss"):
        datagen.named_process("nope")


def test_csv_round_trip(tmp_path):
    d = generate(ROTATED_NOISE, 40, 0)
    d.to_csv(tmp_path / "d.csv")
    back = Dataset.from_csv(tmp_path / "d.csv")
    assert open(tmp_path / "d.csv").readline().strip() == "x1,x2,x3,t,y,z"
    assert np.array_equal(back.x, d.x) and np.array_equal(back.z_hidden, d.z_hidden)
    b = generate(MAIN_BINARY, 40, 0).observed()
    b.to_csv(tmp_path / "b.csv")
    back = Dataset.from_csv(tmp_path / "b.csv")
    assert back.is_binary and np.array_equal(back.y, b.y)
    assert open(tmp_path / "b.csv").readline().strip() == "x1,x2,t,y"


def test_empty_csv(tmp_path):
    (tmp_path / "e.csv").write_text("x1,x2,t,y\n")
    with pytest.raises(EmptyDatasetError):
        Dataset.from_csv(tmp_path / "e.csv")
