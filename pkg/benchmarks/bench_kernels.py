"""Compare the compiled kernels with the numpy fallback.

Run with ``python3 benchmarks/bench_kernels.py``.  Prints the median wall
time of each backend, the speedup and the largest difference between the
two results.
"""

from __future__ import annotations

import argparse
import statistics
import time

import numpy as np

from sl2lab import _kernels_py
from sl2lab.grid import Grid

try:
    from sl2lab import _kernels
except ImportError:  # extension not built
    _kernels = None


def _median_time(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times), out


def ball_case(n):
    grid = Grid(3, n, 1.0)
    rng = np.random.default_rng(0)
    vals = rng.random(grid.shape).ravel()
    rho = grid.distance((0.5, 0.5, 0.5)).ravel()
    radii = np.linspace(0.1, 0.25, 32)
    return lambda mod: mod.ball_sums(vals, rho, radii, grid.h)


def trace_case(n):
    grid = Grid(2, n, 1.0)
    x, y = grid.coords()
    nu = np.stack([np.cos(2 * np.pi * y), np.sin(2 * np.pi * x) + 1.5])
    tensor = np.stack([nu[0] * nu[0], nu[0] * nu[1], nu[1] * nu[1]], axis=-1)
    zeros = np.zeros((0, 2))
    return lambda mod: mod.trace_line_field(tensor, grid.h, (0.0, 0.0), (0.3, 0.4), (1.0, 0.0),
                                            grid.h / 2, 4 * n, zeros, 0.0, True, 0.0)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=64, help="lattice size")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if _kernels is None:
        print("compiled extension not built; only the fallback is available")
    cases = {"ball_sums": ball_case(args.n), "trace_line_field": trace_case(args.n)}
    print(f"{'kernel':<18}{'fallback [s]':>14}{'compiled [s]':>14}{'speedup':>10}{'max diff':>12}")
    for name, case in cases.items():
        t_py, r_py = _median_time(lambda: case(_kernels_py), args.repeat)
        if _kernels is None:
            print(f"{name:<18}{t_py:>14.4f}{'-':>14}{'-':>10}{'-':>12}")
            continue
        t_c, r_c = _median_time(lambda: case(_kernels), args.repeat)
        r_py, r_c = np.asarray(r_py), np.asarray(r_c)
        diff = float(np.max(np.abs(r_py - r_c))) if r_py.shape == r_c.shape else float("nan")
        print(f"{name:<18}{t_py:>14.4f}{t_c:>14.4f}{t_py / t_c:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
