#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Runs each hot kernel on representative workloads through both paths:
the JIT-compiled function and the fallback implementation the package
selects when ``SCDN_NO_NUMBA=1``.  Usage:

    python benchmarks/bench_kernels.py [--repeats 5]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from scdn import kernels
from scdn.accel import NUMBA_ENABLED


def timeit(fn, *args, repeats: int = 5) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_walks(repeats: int):
    rng = np.random.default_rng(0)
    n = 2000
    deg = 8
    indptr = np.arange(0, n * deg + 1, deg, dtype=np.int64)
    indices = rng.integers(0, n, size=n * deg).astype(np.int64)
    cumprob = np.tile(np.cumsum(np.full(deg, 1.0 / deg)), n)
    starts = np.tile(np.arange(n, dtype=np.int64), 20)
    uniforms = rng.random((len(starts), 9))
    args = (indptr, indices, cumprob, starts, 10, uniforms)
    return (timeit(kernels._walks_numba, *args, repeats=repeats) if NUMBA_ENABLED else None,
            timeit(kernels._walks_numpy, *args, repeats=repeats))


def bench_ga(repeats: int):
    rng = np.random.default_rng(1)
    n_fu, pop_size = 40, 200
    p = rng.random((n_fu, n_fu))
    p = (p + p.T) / 2
    np.fill_diagonal(p, 1.0)
    pop = rng.integers(1, 5, size=(pop_size, n_fu)).astype(np.int64)
    volumes = rng.uniform(10, 50, size=n_fu)
    args = (pop, p, volumes, 4, 2, 20, 100.0, 0.4, 40.0, False)
    return (timeit(kernels._ga_fitness_numba, *args, repeats=repeats) if NUMBA_ENABLED else None,
            timeit(kernels._ga_fitness_numpy, *args, repeats=repeats))


def bench_insertion(repeats: int):
    rng = np.random.default_rng(2)
    lats = 31.0 + rng.random(10) * 0.05
    lons = 121.0 + rng.random(10) * 0.05
    args = (lats, lons, 31.0, 121.0, 31.02, 121.02, 31.04, 121.04)

    def many(fn):
        def run(*a):
            for _ in range(1000):
                fn(*a)
        return run

    return (timeit(many(kernels._best_insertion_numba), *args, repeats=repeats)
            if NUMBA_ENABLED else None,
            timeit(many(kernels._best_insertion_numpy), *args, repeats=repeats))


def bench_route_times(repeats: int):
    rng = np.random.default_rng(3)
    lats = 31.0 + rng.random(12) * 0.05
    lons = 121.0 + rng.random(12) * 0.05
    args = (lats, lons, 31.0, 121.0, 0.0, 5.0)

    def many(fn):
        def run(*a):
            for _ in range(1000):
                fn(*a)
        return run

    return (timeit(many(kernels._route_times_numba), *args, repeats=repeats)
            if NUMBA_ENABLED else None,
            timeit(many(kernels._route_times_numpy), *args, repeats=repeats))


BENCHES = {
    "weighted_walks (40k walks x len 10)": bench_walks,
    "ga_fitness (200 x 40 FUs)": bench_ga,
    "best_insertion (1000 calls, 10 tasks)": bench_insertion,
    "route_times (1000 calls, 12 tasks)": bench_route_times,
}


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    if not NUMBA_ENABLED:
        print("numba disabled (SCDN_NO_NUMBA set or import failed); "
              "timing the numpy path only\n")
    else:
        kernels.warmup()

    header = f"{'kernel':<40} {'numba':>10} {'numpy':>10} {'speedup':>9}"
    print(header)
    print("-" * len(header))
    for name, bench in BENCHES.items():
        t_numba, t_numpy = bench(args.repeats)
        if t_numba is None:
            print(f"{name:<40} {'-':>10} {t_numpy * 1e3:9.2f}ms {'-':>9}")
        else:
            print(f"{name:<40} {t_numba * 1e3:9.2f}ms {t_numpy * 1e3:9.2f}ms "
                  f"{t_numpy / t_numba:8.1f}x")


if __name__ == "__main__":
    main()
