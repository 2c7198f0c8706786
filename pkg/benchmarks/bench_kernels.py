"""Compiled vs pure-numpy kernel timings.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numba side is warmed up once before timing so compile cost is excluded.
"""

import argparse
import time

import numpy as np

from odin_kg import kernels
from odin_kg._accel import USE_NUMBA
from odin_kg.synthetic import random_digraph, regular_tree


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    g = random_digraph(2000, 8.0, rng_seed=0)
    tree = regular_tree(50, 3)
    seeds = np.array([0], np.int64)
    frontier = np.arange(0, 1000, dtype=np.int64)[:, None]

    cases = [
        ("local_push eps=1e-6", kernels._push_jit, kernels._push_np,
         (g.indptr, g.obj, seeds, 0.15, 1e-6)),
        ("two_paths", kernels._two_paths_jit, kernels._two_paths_np, (g.indptr, g.obj)),
        ("expand_frontier 1000", kernels._expand_jit, kernels._expand_np,
         (g.indptr, g.obj, frontier, False)),
        ("enumerate_paths tree h=3", kernels._enumerate_jit, kernels._enumerate_np,
         (tree.indptr, tree.obj, np.array([tree.index_of("n")]), 3, False)),
    ]
    print(f"numba active: {USE_NUMBA}")
    print(f"{'kernel':28s} {'numba s':>10s} {'numpy s':>10s} {'speedup':>8s}")
    for name, fast, slow, fargs in cases:
        fast(*fargs)
        tf = best_of(lambda: fast(*fargs), args.repeat)
        ts = best_of(lambda: slow(*fargs), max(1, args.repeat // 2))
        print(f"{name:28s} {tf:10.4f} {ts:10.4f} {ts / tf:8.1f}x")


if __name__ == "__main__":
    main()
