"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 20]
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from structfl import kernels
from structfl.config import ExperimentConfig
from structfl.flcore import run_experiment


def kernel_cases(rng):
    n_in, n_hidden, n_out, n = 16, 32, 10, 128
    p = n_in * n_hidden + n_hidden + n_hidden * n_out + n_out
    params = rng.normal(size=p) * 0.1
    X = rng.normal(size=(n, n_in))
    y = rng.integers(0, n_out, n)
    a = rng.random((30, 30))
    P = a / a.sum(axis=1, keepdims=True)
    U = rng.normal(size=(30, p))
    Xs, ys = rng.normal(size=(n, 8)), rng.integers(0, 10, n)
    small = rng.normal(size=8 * 10 + 10) * 0.1
    return {
        "loss_grad (128x8, linear)": lambda k: k.loss_grad(small, Xs, ys, 8, 0, 10, True, True),
        "loss_grad (128x16, h=32)": lambda k: k.loss_grad(params, X, y, n_in, n_hidden, n_out, True, True),
        "propagate (N=30, m=4)": lambda k: k.propagate(P, U, 4),
        "sq_dists (N=30)": lambda k: k.sq_dists(U),
    }


def best_of(fn, repeat: int, number: int) -> float:
    return min(timeit.repeat(fn, repeat=repeat, number=number)) / number


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--number", type=int, default=50)
    args = ap.parse_args(argv)
    backends = {"python": kernels.get_backend("python")}
    if kernels.compiled is not None:
        backends["compiled"] = kernels.compiled
    else:
        print("compiled extension not available; timing python backend only")
    rng = np.random.default_rng(0)
    print(f"{'case':<28}" + "".join(f"{b:>14}" for b in backends) + f"{'speedup':>10}")
    for name, fn in kernel_cases(rng).items():
        t = {b: best_of(lambda: fn(k), args.repeat, args.number) for b, k in backends.items()}
        speed = t["python"] / t["compiled"] if "compiled" in t else float("nan")
        print(f"{name:<28}" + "".join(f"{v * 1e6:>12.1f}us" for v in t.values()) + f"{speed:>9.2f}x")

    cfg = ExperimentConfig(n_clients=20, planted_blocks=2, rounds=20, graph="block", hidden_dim=16)
    t = {}
    for b, k in backends.items():
        orig = (kernels.loss_grad, kernels.predict, kernels.propagate, kernels.sq_dists)
        kernels.loss_grad, kernels.predict, kernels.propagate, kernels.sq_dists = (
            k.loss_grad, k.predict, k.propagate, k.sq_dists)
        try:
            t[b] = best_of(lambda: run_experiment(cfg), 3, 1)
        finally:
            kernels.loss_grad, kernels.predict, kernels.propagate, kernels.sq_dists = orig
    speed = t["python"] / t["compiled"] if "compiled" in t else float("nan")
    print(f"{'experiment (N=20, T=20)':<28}" + "".join(f"{v * 1e3:>12.1f}ms" for v in t.values())
          + f"{speed:>9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
