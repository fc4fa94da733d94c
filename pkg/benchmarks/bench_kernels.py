"""Benchmark the pairwise-aggregation kernels: numba @njit vs pure numpy.

Usage: python benchmarks/bench_kernels.py [n_samples ...]
The same kernels back the constrained-welfare row builder and the inequality
statistic; at the larger sample counts the O(N^2) pair reduction dominates
problem build time.
"""
import sys
import time

import numpy as np

from heavisolve import _kernels


def time_call(fn, *args, repeats=3):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main(sizes):
    try:
        matrix_nb, sum_nb = _kernels._build_numba()
        have_numba = True
    except ImportError:
        have_numba = False
        print("numba unavailable; timing the numpy path only")

    rng = np.random.default_rng(0)
    print(f"{'N':>7} {'atoms':>6} {'numpy (s)':>10} {'numba (s)':>10} {'speedup':>8}")
    for n in sizes:
        k = max(10, n // 40)
        atom_idx = rng.integers(0, k, n).astype(np.int64)
        y = rng.uniform(0, 20, n)
        inv_e = np.full(n, 4.0)
        m = float(y.max()) + 1.0
        t_np = time_call(_kernels.pair_matrix_numpy, atom_idx, y, inv_e, m, k)
        if have_numba:
            matrix_nb(atom_idx[:8], y[:8], inv_e[:8], m, k)  # compile once
            t_nb = time_call(matrix_nb, atom_idx, y, inv_e, m, k)
            print(f"{n:>7} {k:>6} {t_np:>10.4f} {t_nb:>10.4f} {t_np / t_nb:>7.1f}x")
        else:
            print(f"{n:>7} {k:>6} {t_np:>10.4f} {'-':>10} {'-':>8}")


if __name__ == "__main__":
    sizes = [int(a) for a in sys.argv[1:]] or [1000, 3000, 6000]
    main(sizes)
