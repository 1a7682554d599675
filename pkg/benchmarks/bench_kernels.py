"""Time the numba and numpy flavours of each kernel.

Usage: python benchmarks/bench_kernels.py [--repeat R]

Prints one line per kernel with the best-of-R wall time of each backend and
the speedup.  Needs numba for the comparison column.
"""
import argparse
import time

import numpy as np

from gpwide import _kernels


def best_of(fn, repeat):
    fn()  # warm-up (JIT compile for numba)
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def cases(rng):
    n, batch = 1025, 8
    tri = (rng.uniform(-1, 0, (batch, n)), 3 + rng.random((batch, n)), rng.uniform(-1, 0, (batch, n)),
           rng.standard_normal((batch, n)))
    M, N = 2000, 128
    quad = (rng.random((M + 1, N + 1)), rng.random(N + 1), rng.random(M), rng.random(M))
    T = 1500
    hold = (np.cumsum(rng.uniform(0.001, 0.01, T)), rng.random((T, 130)), rng.random(130))
    return {"thomas": tri, "quad_terms_1d": quad, "holder_max": hold}


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"selected backend: {_kernels.BACKEND}")
    print(f"{'kernel':<16}{'numpy [s]':>12}{'numba [s]':>12}{'speedup':>10}")
    for name, inputs in cases(rng).items():
        t_np = best_of(lambda: getattr(_kernels, name + "_numpy")(*inputs), args.repeat)
        nb = getattr(_kernels, name + "_numba")
        if nb is None:
            print(f"{name:<16}{t_np:>12.4g}{'n/a':>12}{'n/a':>10}")
            continue
        t_nb = best_of(lambda: nb(*inputs), args.repeat)
        print(f"{name:<16}{t_np:>12.4g}{t_nb:>12.4g}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
