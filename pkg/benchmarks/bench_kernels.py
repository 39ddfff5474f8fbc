"""Time the numba-compiled prox kernels against the pure-numpy fallbacks.

Usage: python benchmarks/bench_kernels.py [--sizes 300,1200] [--repeats 20]

Both paths are imported directly, so one process measures both regardless
of the BURSTKIT_NO_NUMBA flag.  The same comparison drives a full
segmentation fit to show the end-to-end effect.
"""
import argparse
import time

import numpy as np

from burstkit import _kernels
from burstkit._kernels import (USE_NUMBA, _l0_partition_loop,
                               _l0_partition_numpy, _tv1d_loop)


def timeit(fn, *args, repeats):
    best = np.inf
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", default="300,1203", help="comma-separated N values")
    ap.add_argument("--repeats", type=int, default=20)
    args = ap.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]

    if USE_NUMBA:
        from numba import njit

        tv_jit = njit(cache=True, nogil=True)(_tv1d_loop)
        l0_jit = njit(cache=True, nogil=True)(_l0_partition_loop)
    else:
        print("numba unavailable or disabled: timing the fallbacks only\n")
        tv_jit = l0_jit = None

    rng = np.random.default_rng(0)
    header = f"{'kernel':<12} {'N':>6} {'numpy (ms)':>12} {'numba (ms)':>12} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for N in sizes:
        u = rng.normal(0, 1, N)
        for name, fast, slow, lam in (
            ("fused_l1", tv_jit, _tv1d_loop, 0.4),
            ("fused_l0", l0_jit, _l0_partition_numpy, 0.8),
        ):
            t_slow = timeit(slow, u, lam, repeats=args.repeats)
            if fast is None:
                print(f"{name:<12} {N:>6} {1e3 * t_slow:>12.3f} {'-':>12} {'-':>9}")
                continue
            fast(u, lam)  # compile outside the timer
            t_fast = timeit(fast, u, lam, repeats=args.repeats)
            np.testing.assert_allclose(fast(u, lam), slow(u, lam), atol=1e-9)
            print(f"{name:<12} {N:>6} {1e3 * t_slow:>12.3f} {1e3 * t_fast:>12.3f} "
                  f"{t_slow / t_fast:>8.1f}x")

    print(f"\nactive package backend: {_kernels.KERNEL_BACKEND}")


if __name__ == "__main__":
    main()
