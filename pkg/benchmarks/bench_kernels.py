"""Benchmark the compiled mixture kernels against the numpy reference.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

from monoflow import _kernels
from monoflow._kernels import ref


def make_case(rng, n, m, N):
    A = rng.standard_normal((n, n))
    A = np.ascontiguousarray(A @ A.T + n * np.eye(n))
    consts = np.ascontiguousarray(rng.uniform(-1.0, 1.0, m))
    inv4tau = np.ascontiguousarray(rng.uniform(0.05, 2.0, m))
    centers = np.ascontiguousarray(rng.uniform(-1.0, 1.0, (m, n)))
    X = np.ascontiguousarray(rng.uniform(-3.0, 3.0, (N, n)))
    return A, consts, inv4tau, centers, X


def timeit(fn, *args, repeats=3):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    if _kernels.backend_name != "cython":
        print("compiled backend unavailable; benchmarking numpy against itself")
    rng = np.random.default_rng(0)
    print(f"selected backend: {_kernels.backend_name}")
    print(f"{'op':<10} {'n':>2} {'m':>2} {'N':>9} {'numpy':>10} "
          f"{'compiled':>10} {'speedup':>8}")
    for n, m in ((1, 2), (2, 3), (4, 2)):
        for N in (1_000, 100_000, 1_000_000):
            args = make_case(rng, n, m, N)
            t_ref = timeit(ref.mixture_log_values, *args)
            t_fast = timeit(_kernels.impl.mixture_log_values, *args)
            print(f"{'values':<10} {n:>2} {m:>2} {N:>9} {t_ref:>10.4f} "
                  f"{t_fast:>10.4f} {t_ref / t_fast:>7.1f}x")
        args = make_case(rng, n, m, 100_000)
        t_ref = timeit(ref.mixture_log_jets, *args)
        t_fast = timeit(_kernels.impl.mixture_log_jets, *args)
        print(f"{'jets':<10} {n:>2} {m:>2} {100_000:>9} {t_ref:>10.4f} "
              f"{t_fast:>10.4f} {t_ref / t_fast:>7.1f}x")


if __name__ == "__main__":
    main()
