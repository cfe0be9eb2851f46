"""Compiled vs numpy MLP kernels, plus one full training epoch per backend.

    python3 benchmarks/bench_kernels.py [--repeat 200]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np


def kernel_times(mod, batch, dims, repeat):
    rng = np.random.default_rng(0)
    dims = np.asarray(dims, dtype=np.int64)
    n_params = sum(int(dims[l] * dims[l + 1] + dims[l + 1]) for l in range(len(dims) - 1))
    params = rng.normal(0, 0.3, n_params)
    x = rng.normal(size=(batch, int(dims[0])))
    acts = np.empty(batch * int(dims[1:].sum()))
    d_out = rng.normal(size=(batch, int(dims[-1])))
    grad = np.empty(n_params)
    d_x = np.empty_like(x)
    mod.mlp_forward(params, dims, x, acts, 0)
    fwd = min(timeit.repeat(lambda: mod.mlp_forward(params, dims, x, acts, 0), number=repeat, repeat=5)) / repeat
    bwd = min(
        timeit.repeat(lambda: mod.mlp_backward(params, dims, x, acts, d_out, grad, d_x, 0), number=repeat, repeat=5)
    ) / repeat
    return fwd, bwd


def epoch_time(backend):
    """Seconds per epoch of the full 10-D CEVAE on 2000 rows, in a fresh interpreter."""
    code = (
        "import time\n"
        "from proxyrestore import cevae, datagen\n"
        "from proxyrestore.nn import backend\n"
        "d = datagen.generate(datagen.named_process('main_lingauss'), 2000, 0)\n"
        "cfg = cevae.CevaeConfig(epochs=5)\n"
        "t0 = time.perf_counter(); cevae.train(cfg, d, 0)\n"
        "print(backend.NAME, (time.perf_counter() - t0) / cfg.epochs)\n"
    )
    env = dict(os.environ, PROXYRESTORE_BACKEND=backend)
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    name, secs = out.stdout.split()
    return name, float(secs)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()

    from proxyrestore.nn import _core_py

    try:
        from proxyrestore.nn import _core
    except ImportError:
        _core = None
        print("compiled extension not built; only the numpy kernels are timed")

    shapes = [(200, (5, 30, 30, 20)), (200, (11, 30, 30, 2)), (1000, (5, 30, 30, 20)), (2000, (11, 30, 30, 2))]
    print(f"{'batch':>6} {'dims':>16} {'backend':>9} {'fwd us':>9} {'bwd us':>9}")
    for batch, dims in shapes:
        results = {"numpy": kernel_times(_core_py, batch, dims, args.repeat)}
        if _core is not None:
            results["compiled"] = kernel_times(_core, batch, dims, args.repeat)
        for name, (f, b) in results.items():
            print(f"{batch:>6} {str(dims):>16} {name:>9} {f * 1e6:>9.1f} {b * 1e6:>9.1f}")
        if _core is not None:
            sp = (sum(results["numpy"]) / sum(results["compiled"]))
            print(f"{'':>33} speedup {sp:.2f}x")

    print("\nfull CEVAE, n=2000, batch 200")
    for backend in ("python", "compiled"):
        name, secs = epoch_time(backend)
        print(f"  {name:>9}: {secs * 1e3:.1f} ms/epoch")


if __name__ == "__main__":
    main()
