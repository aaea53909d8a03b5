"""Throughput of the compiled and pure-Python Monte Carlo kernels.

Run with ``python3 benchmarks/bench_kernels.py [--trajectories N] [--steps S]``.
Both backends receive the same increments; the script also checks that
their outputs agree bit for bit.
"""
import argparse
import time

import numpy as np

from etclab import _kernels_py

try:
    from etclab import _kernels
except ImportError:
    _kernels = None


def _inputs(N, S, n, seed):
    g = np.random.default_rng(seed)
    return g.standard_normal((N, S, n)) * 1e-2


def _time(kernel, name, dW, arg, dt, repeats):
    N, _, n = dW.shape
    best = float("inf")
    for _ in range(repeats):
        X = np.zeros((N, n))
        cost = np.zeros(N)
        events = np.zeros(N, dtype=np.int64)
        t0 = time.perf_counter()
        if name == "etc":
            kernel.etc_segment(dW, X, arg, dt, cost, events)
        else:
            kernel.ttc_segment(dW, X, arg, np.zeros(N, dtype=np.int64), dt, cost, events)
        best = min(best, time.perf_counter() - t0)
    return best, (X, cost, events)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--trajectories", type=int, default=200)
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--dim", type=int, default=1)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args(argv)

    dW = _inputs(args.trajectories, args.steps, args.dim, 0)
    total = args.trajectories * args.steps
    backends = [("python", _kernels_py)] + ([("compiled", _kernels)] if _kernels else [])
    print(f"{total:.2e} trajectory-steps, n = {args.dim}")
    for name, arg in (("etc", 0.5 * args.dim), ("ttc", 500)):
        results = {}
        for label, mod in backends:
            secs, out = _time(mod, name, dW, arg, 1e-4, args.repeats)
            results[label] = out
            print(f"  {name} {label:>8}: {secs:8.4f} s  ({total / secs / 1e6:7.1f} Msteps/s)")
        if len(results) == 2:
            same = all(np.array_equal(a, b) for a, b in zip(results["python"], results["compiled"]))
            print(f"  {name} bitwise identical: {same}")
    if _kernels is None:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
