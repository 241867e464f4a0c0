"""Compare the numba kernels with their numpy twins.

Run with ``python benchmarks/bench_kernels.py``.  Each kernel is warmed up once
(so numba compilation is excluded), then timed as the best of ``--repeat``
runs.  Outputs of the two backends are checked for agreement before timing.
"""

import argparse
import time

import numpy as np

from semilab._accel import USE_NUMBA
from semilab._kernels import (
    band_sups_numba,
    band_sups_numpy,
    lagged_mollify_numba,
    lagged_mollify_numpy,
    partition_scan_numba,
    partition_scan_numpy,
)


def best_of(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(size, rng):
    w = np.concatenate(([0.0], np.cumsum(rng.standard_normal(size) / np.sqrt(size))))
    left = np.concatenate(([0.0], w[:-1]))
    yield "partition_scan", (w, left, 2.0**-8, size + 2), partition_scan_numba, partition_scan_numpy

    n = 64
    knots = np.linspace(0.0, 2.0, 8 * n * 2 + 1)
    widths = np.append(np.diff(knots), knots[1] - knots[0])
    h = rng.standard_normal(knots.size)
    query = np.linspace(0.0, 2.0, size // 16 + 1)
    yield "lagged_mollify", (knots, widths, h, query, n), lagged_mollify_numba, lagged_mollify_numpy

    rows = 200
    terms = rng.standard_normal((rows, size // 16))
    band = rng.integers(-1, 14, size=terms.shape).astype(np.int16)
    hidx = np.array([terms.shape[1] // 2, terms.shape[1]], dtype=np.int64)
    yield "band_sups", (terms, band, 13, hidx), band_sups_numba, band_sups_numpy


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--size", type=int, default=2**16, help="path length for the scan kernels")
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--seed", type=int, default=0)
    args = p.parse_args(argv)
    if not USE_NUMBA:
        raise SystemExit("numba is disabled (SEMILAB_NO_NUMBA set); nothing to compare against")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<16}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>10}")
    for name, call_args, fast, slow in cases(args.size, rng):
        a, b = fast(*call_args), slow(*call_args)
        a0, b0 = (a[0], b[0]) if isinstance(a, tuple) else (a, b)
        if not np.allclose(a0, b0, rtol=1e-12, atol=1e-12):
            raise SystemExit(f"{name}: backends disagree")
        t_fast = best_of(lambda: fast(*call_args), args.repeat)
        t_slow = best_of(lambda: slow(*call_args), args.repeat)
        print(f"{name:<16}{t_fast * 1e3:>12.3f}{t_slow * 1e3:>12.3f}{t_slow / t_fast:>10.1f}")


if __name__ == "__main__":
    main()
