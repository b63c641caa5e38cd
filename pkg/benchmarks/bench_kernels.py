#!/usr/bin/env python3
"""Timing comparison of the compiled sweep kernels against the numpy fallback.

Runs both first-order solvers on each backend over a ladder of grids and
prints per-case wall times plus the speedup, checking that the two backends
land on the same fixed point.

Usage: python benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import time

import numpy as np

from hjlab.first_order import solve_semi_lagrangian, solve_upwind_fd
from hjlab.geometry import Disk, Interval, build_grid
from hjlab.hamiltonian import ProblemSpec, data_library, make_exponents
from hjlab.kernels import get_backend


def _cases():
    interval = Interval(0.0, 1.0)
    disk = Disk((0.0, 0.0), 1.0)
    e3 = make_exponents(3.0)
    yield ("interval distance h=2^-8",
           ProblemSpec(interval, e3, 1.0, 0.0, data_library("distance", interval)),
           build_grid(interval, 2.0**-8))
    yield ("interval distance h=2^-9",
           ProblemSpec(interval, e3, 1.0, 0.0, data_library("distance", interval)),
           build_grid(interval, 2.0**-9))
    yield ("disk bump h=2^-4",
           ProblemSpec(disk, e3, 1.0, 0.0,
                       data_library("bump", disk, center=(0.0, 0.0), radius=0.25, height=1.0)),
           build_grid(disk, 2.0**-4))


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--repeat", type=int, default=3, help="timing repetitions (best of)")
    args = ap.parse_args()

    try:
        compiled = get_backend("compiled")
    except ImportError:
        raise SystemExit("compiled kernel extension is not built; nothing to compare")
    fallback = get_backend("python")

    header = f"{'case':28s} {'solver':6s} {'compiled':>10s} {'python':>10s} {'speedup':>8s}  agree"
    print(header)
    print("-" * len(header))
    for name, spec, grid in _cases():
        for label, solver in (("sl", solve_semi_lagrangian), ("fd", solve_upwind_fd)):
            tc, rc = _time(lambda: solver(spec, grid, backend=compiled), args.repeat)
            tp, rp = _time(lambda: solver(spec, grid, backend=fallback), args.repeat)
            dev = float(np.max(np.abs(rc.u.values - rp.u.values)))
            print(f"{name:28s} {label:6s} {tc:9.3f}s {tp:9.3f}s {tp / tc:7.1f}x  {dev:.1e}")


if __name__ == "__main__":
    main()
