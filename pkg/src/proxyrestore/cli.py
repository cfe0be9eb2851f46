"""Command line entry point: gen, fit, sweep, repro, prop2-path."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analytic, cevae, datagen, harness, metrics, presets
from .numerics import RandomStream

ESTIMATORS = {
    "linear-1d": presets.LINEAR_1D,
    "full-10d": presets.FULL,
    "full-10d-linear-y": presets.FULL_LINEAR_Y,
    "binary-latent": presets.BINARY_LATENT,
}


def _load_process(args):
    if args.process_json:
        return datagen.load_process(args.process_json)
    return datagen.named_process(args.process)


def cmd_gen(args):
    proc = _load_process(args)
    data = datagen.generate(proc, args.n, RandomStream(args.seed).child("data", args.n))
    if not args.hidden:
        data = data.observed()
    out = Path(args.out)
    data.to_csv(out)
    if args.params_out:
        datagen.save_process(proc, args.params_out)
    print(f"wrote {data.n} rows to {out}")


def cmd_fit(args):
    data = datagen.Dataset.from_csv(args.data).observed()
    truth = None
    if args.process or args.process_json:
        truth = datagen.true_do(_load_process(args))
    out = {"estimator": args.estimator, "n": data.n}
    if args.estimator == "analytic":
        if data.is_binary:
            do = analytic.restore_binary(data)
        else:
            res = analytic.restore_lingauss_data(data)
            do = res.do_dist
            out["c_yt_hat"] = res.c_yt_hat
    elif args.estimator in ("direct_adjust", "no_adjust"):
        res = analytic.direct_adjust(data) if args.estimator == "direct_adjust" else analytic.no_adjust(data)
        do = res.do_dist
        out["c_yt_hat"] = res.coef_t
    else:
        if args.config:
            cfg = cevae.CevaeConfig(**json.loads(Path(args.config).read_text()))
        else:
            cfg = ESTIMATORS[args.estimator]
            if data.is_binary and cfg.variant == "full":
                cfg = presets.FULL_BINARY
        if args.epochs:
            cfg = replace(cfg, epochs=args.epochs)
        if args.proxy_scale is not None:
            cfg = replace(cfg, proxy_scale=args.proxy_scale)
        stream = RandomStream(args.seed).child("fit")
        model, report = cevae.train(cfg, data, stream)
        do = cevae.linear_do(model) if cfg.variant == "linear" else cevae.estimate_do(model, stream=stream.child("do"))
        if cfg.y_head == "linear":
            out["c_yt_hat"] = cevae.extract_cyt(model)
        if not model.binary_latent:
            out["active_dims"] = cevae.active_dims(cevae.latent_activity(model, data))
        out["final_elbo"] = report.final_elbo
        if args.out:
            d = Path(args.out)
            d.mkdir(parents=True, exist_ok=True)
            model.save(d / "checkpoint.json")
            report.to_csv(d / "train_report.csv")
    m0, m1 = metrics.do_means(do, [0.0, 1.0])
    out.update(do_mean_t0=float(m0), do_mean_t1=float(m1))
    if truth is not None:
        out["aid"] = metrics.aid(do, truth, data, presets.AID)
        out["ate_error"] = metrics.ate_error(do, truth)
    print(json.dumps(out, indent=2))


def _progress(i, total, row):
    status = "error: " + row.error if row.error else f"aid={row.aid:.4f}"
    print(f"[{i}/{total}] {row.process_id} {row.estimator_id} n={row.n} lam={row.proxy_scale} seed={row.seed} {status}",
          file=sys.stderr, flush=True)


def _run(config, args):
    if args.seed is not None:
        config = config.replace(seed=args.seed)
    if args.out:
        config = config.replace(output=args.out)
    rows = harness.run_experiment(config, workers=args.workers, progress=None if args.quiet else _progress)
    for key, med in harness.summarize(rows).items():
        print("median aid", *key, f"{med:.4f}")
    if config.output:
        print(f"wrote {len(rows)} rows to {config.output}")
    return rows


def cmd_sweep(args):
    _run(harness.ExperimentConfig.from_json(args.config), args)


def cmd_repro(args):
    config = harness.preset(args.preset)
    if args.dump_config:
        if args.seed is not None:
            config = config.replace(seed=args.seed)
        Path(args.dump_config).write_text(json.dumps(config.to_dict(), indent=2))
        print(f"wrote {args.preset} config to {args.dump_config}")
        return
    if args.out is None:
        args.out = f"{args.preset}.csv"
    _run(config, args)


def cmd_prop2(args):
    s = np.asarray(args.s, dtype=float)
    vals = harness.prop2_path_eval(args.gamma1, s, args.copies)
    for si, v in zip(s, vals):
        print(f"{si:.6g},{v:.6f}")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="proxyrestore")
    sub = p.add_subparsers(dest="command", required=True)

    def process_args(q, required):
        g = q.add_mutually_exclusive_group(required=required)
        g.add_argument("--process", choices=list(datagen.NAMED_PROCESSES))
        g.add_argument("--process-json", help="flat JSON process parameters")

    g = sub.add_parser("gen", help="sample a dataset to CSV")
    process_args(g, True)
    g.add_argument("--n", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.add_argument("--hidden", action="store_true", help="also write the hidden confounder column z")
    g.add_argument("--params-out", help="write the process parameters as JSON")
    g.set_defaults(func=cmd_gen)

    f = sub.add_parser("fit", help="fit one estimator and print its metrics")
    f.add_argument("--data", required=True)
    f.add_argument("--estimator", default="analytic",
                   choices=["analytic", "direct_adjust", "no_adjust", *ESTIMATORS])
    f.add_argument("--config", help="CEVAE config JSON (overrides the named estimator)")
    f.add_argument("--epochs", type=int)
    f.add_argument("--proxy-scale", type=float)
    process_args(f, False)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", help="directory for checkpoint and training report")
    f.set_defaults(func=cmd_fit)

    for name, func, helptext in (("sweep", cmd_sweep, "run an experiment config"), ("repro", cmd_repro, "run a preset")):
        s = sub.add_parser(name, help=helptext)
        if name == "sweep":
            s.add_argument("--config", required=True)
        else:
            s.add_argument("preset", choices=list(presets.PRESETS))
            s.add_argument("--dump-config", help="write the resolved config as JSON and exit")
        s.add_argument("--seed", type=int)
        s.add_argument("--out")
        s.add_argument("--workers", type=int, help="worker processes (default: $PROXYRESTORE_WORKERS or 1)")
        s.add_argument("--quiet", action="store_true")
        s.set_defaults(func=func)

    q = sub.add_parser("prop2-path", help="evaluate the exact-copy ELBO path")
    q.add_argument("--gamma1", type=float, default=1.0)
    q.add_argument("--copies", type=int, default=2, choices=(1, 2))
    q.add_argument("--s", type=float, nargs="+", default=[0.5, 0.1, 0.01, 0.001, 1e-4, 1e-5, 1e-6])
    q.set_defaults(func=cmd_prop2)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.func(args)
    return 0


if __name__ == "__main__":
    sys.exit(main())
