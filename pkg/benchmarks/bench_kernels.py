#!/usr/bin/env python3
"""Benchmark the hot kernels: numba @njit vs the pure-numpy fallback.

The same comparison can be reproduced end to end by running any workload
twice with VPRKIT_NO_NUMBA=1 toggled; this script times the kernels in
isolation within one process.

Usage:
    python benchmarks/bench_kernels.py [--rows 50000] [--dim 64] [--queries 32] [--repeat 5]
"""

import argparse
import time

import numpy as np

from vprkit import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--rows", type=int, default=50000)
    parser.add_argument("--dim", type=int, default=64)
    parser.add_argument("--queries", type=int, default=32)
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    vectors = np.ascontiguousarray(rng.standard_normal((args.rows, args.dim)))
    queries = np.ascontiguousarray(rng.standard_normal((args.queries, args.dim)))
    query = np.ascontiguousarray(queries[0])
    n_geo = args.rows * 4
    lat1 = np.ascontiguousarray(rng.uniform(-90, 90, n_geo))
    lon1 = np.ascontiguousarray(rng.uniform(-180, 180, n_geo))
    lat2 = np.ascontiguousarray(rng.uniform(-90, 90, n_geo))
    lon2 = np.ascontiguousarray(rng.uniform(-180, 180, n_geo))

    print(f"rows={args.rows} dim={args.dim} queries={args.queries} "
          f"(numba available: {_kernels.sq_dists_numba is not None})")
    print(f"{'kernel':<28}{'numpy':>12}{'numba':>12}{'speedup':>10}")

    cases = [
        ("sq_dists (1 query)",
         lambda: _kernels.sq_dists_numpy(vectors, query),
         None if _kernels.sq_dists_numba is None
         else (lambda: _kernels.sq_dists_numba(vectors, query))),
        (f"sq_dists_batch ({args.queries} q)",
         lambda: _kernels.sq_dists_batch_numpy(vectors, queries),
         None if _kernels.sq_dists_batch_numba is None
         else (lambda: _kernels.sq_dists_batch_numba(vectors, queries))),
        (f"haversine ({n_geo} pairs)",
         lambda: _kernels.haversine_m_numpy(lat1, lon1, lat2, lon2),
         None if _kernels.haversine_m_numba is None
         else (lambda: _kernels.haversine_m_numba(lat1, lon1, lat2, lon2))),
    ]

    for name, numpy_fn, numba_fn in cases:
        t_numpy = best_of(numpy_fn, args.repeat)
        if numba_fn is None:
            print(f"{name:<28}{t_numpy * 1e3:>10.2f}ms{'n/a':>12}{'':>10}")
            continue
        numba_fn()  # trigger compilation outside the timed region
        t_numba = best_of(numba_fn, args.repeat)
        print(f"{name:<28}{t_numpy * 1e3:>10.2f}ms{t_numba * 1e3:>10.2f}ms"
              f"{t_numpy / t_numba:>9.2f}x")


if __name__ == "__main__":
    main()
