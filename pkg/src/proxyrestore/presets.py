"""Built-in experiment configurations, one per reproduced figure or table."""

from __future__ import annotations

from dataclasses import replace

from .cevae import CevaeConfig
from .harness import EstimatorSpec, ExperimentConfig, ProcessEntry
from .metrics import AidSpec

SIZES = (500, 2000, 20000)
SEEDS = tuple(range(10))
# mixture densities are costly on a fine y grid; 200 t draws per AID keeps sweeps quick
AID = AidSpec(t_sample_count=200)

FULL = CevaeConfig(variant="full", latent_dim=10, epochs=300, batch_size=200, lr_start=0.01, lr_end=0.001)
LINEAR_1D = CevaeConfig(variant="linear", latent_dim=1, epochs=500, batch_size=200, lr_start=0.01, lr_end=0.001)
FULL_BINARY = replace(FULL, lr_end=0.0005)
BINARY_LATENT = replace(FULL_BINARY, variant="binary-latent", latent_dim=1)
FULL_LINEAR_Y = replace(FULL, y_head="linear")


def _procs(*names):
    return tuple(ProcessEntry.parse(n) for n in names)


def _cevae(id, cfg, init=None):
    return EstimatorSpec(id, "cevae", cfg, init)


ANALYTIC = EstimatorSpec("analytic", "analytic")
DIRECT = EstimatorSpec("direct_adjust", "direct_adjust")
NO_ADJUST = EstimatorSpec("no_adjust", "no_adjust")


def fig2a():
    return ExperimentConfig(
        "fig2a",
        _procs("main_lingauss"),
        (ANALYTIC, _cevae("linear-1d", LINEAR_1D), _cevae("full-10d", FULL)),
        SIZES,
        SEEDS,
        aid=AID,
    )


def fig2d():
    return ExperimentConfig("fig2d", _procs("main_binary"), (ANALYTIC, _cevae("full-10d", FULL_BINARY)), SIZES, SEEDS, aid=AID)


def binary_latent():
    return ExperimentConfig(
        "binary_latent", _procs("main_binary"), (ANALYTIC, _cevae("binary-latent", BINARY_LATENT)), SIZES, SEEDS, aid=AID
    )


def fig3b():
    return ExperimentConfig(
        "fig3b",
        _procs("rotated_noise"),
        (_cevae("full-1d", replace(FULL, latent_dim=1)), _cevae("full-2d", replace(FULL, latent_dim=2))),
        SIZES,
        SEEDS,
        aid=AID,
    )


def fig3de():
    return ExperimentConfig(
        "fig3de",
        _procs("repeated_proxy"),
        (ANALYTIC, DIRECT, NO_ADJUST, _cevae("full-10d-linear-y", FULL_LINEAR_Y)),
        SIZES,
        SEEDS,
        aid=AID,
    )


def lambda_sweep():
    return ExperimentConfig(
        "lambda_sweep",
        _procs("repeated_proxy"),
        (DIRECT, NO_ADJUST, _cevae("full-10d-linear-y", replace(FULL_LINEAR_Y, epochs=100))),
        (20000,),
        SEEDS,
        proxy_scales=tuple(round(0.1 * i, 1) for i in range(11)),
        aid=AID,
    )


def kl_anneal_10d():
    lin10 = replace(LINEAR_1D, latent_dim=10, kl_anneal_start=0.05, kl_ramp_epochs=LINEAR_1D.epochs // 2)
    return ExperimentConfig(
        "kl_anneal_10d",
        _procs("main_lingauss"),
        (_cevae("linear-1d", LINEAR_1D), _cevae("linear-10d-anneal", lin10)),
        (2000,),
        tuple(range(20)),
        aid=AID,
    )


def custom_init_2d():
    # larger batches and a flat, small learning rate, trained well past apparent convergence
    careful = dict(batch_size=1000, lr_start=0.001, lr_end=0.001, epochs=1000)
    return ExperimentConfig(
        "custom_init_2d",
        _procs("main_lingauss"),
        (
            _cevae("linear-1d", replace(LINEAR_1D, **careful)),
            _cevae("linear-2d-random", replace(LINEAR_1D, latent_dim=2, **careful)),
            _cevae("linear-2d-split", replace(LINEAR_1D, latent_dim=2, **careful), init="split_2d"),
        ),
        (20000,),
        (0, 1, 2),
        aid=AID,
    )


def replication_lingauss():
    return ExperimentConfig(
        "replication_lingauss",
        _procs("lingauss_p1", "lingauss_p2", "lingauss_p3", "lingauss_p4"),
        (ANALYTIC, _cevae("linear-1d", LINEAR_1D), _cevae("full-10d", FULL)),
        SIZES,
        SEEDS,
        aid=AID,
    )


def replication_binary():
    return ExperimentConfig(
        "replication_binary",
        _procs("binary_p1", "binary_p2", "binary_p3", "binary_p4"),
        (ANALYTIC, _cevae("full-10d", FULL_BINARY), _cevae("binary-latent", BINARY_LATENT)),
        SIZES,
        SEEDS,
        aid=AID,
    )


PRESETS = {
    "fig2a": fig2a,
    "fig2d": fig2d,
    "fig3b": fig3b,
    "fig3de": fig3de,
    "lambda_sweep": lambda_sweep,
    "kl_anneal_10d": kl_anneal_10d,
    "binary_latent": binary_latent,
    "custom_init_2d": custom_init_2d,
    "replication_lingauss": replication_lingauss,
    "replication_binary": replication_binary,
}
