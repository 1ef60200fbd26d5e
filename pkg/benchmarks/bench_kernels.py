"""Compare the compiled and pure-Python solver kernels.

    python3 benchmarks/bench_kernels.py [--sizes 64 128 256] [--repeat 5]

Times one right-hand-side evaluation and one uncontrolled integration to
t = 1 per backend and grid size, checks the two backends agree, and prints
a table with the speed-up of each backend over the Python fallback.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from chcontrol.solver import SolverConfig, available_backends, integrate, rhs
from chcontrol.trigpoly import parse_trigpoly, to_grid

DATA = "0.3*sin(x) + 0.1*cos(2x) - 0.05*sin(3x)"


def bench(n: int, backend: str, repeat: int):
    cfg = SolverConfig(n=n, backend=backend)
    u = to_grid(parse_trigpoly(DATA), n)
    phi = to_grid(parse_trigpoly("0.2*cos(x)"), n)
    calls = 200
    t_rhs = min(timeit.repeat(lambda: rhs(u, phi, None, cfg), number=calls, repeat=repeat)) / calls
    t_int = min(timeit.repeat(lambda: integrate(u, phi, None, 1, cfg), number=1, repeat=repeat))
    return t_rhs, t_int, integrate(u, phi, None, 1, cfg)


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[64, 128, 256, 512])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = available_backends()
    if "cython" not in backends:
        print("compiled backend unavailable; timing the Python fallback only")
    print(f"{'n':>5} {'backend':>8} {'rhs [us]':>10} {'integrate [ms]':>15} {'speed-up':>9}")
    for n in args.sizes:
        rows = {b: bench(n, b, args.repeat) for b in backends}
        base = rows["python"][1]
        for b, (t_rhs, t_int, _t) in rows.items():
            print(f"{n:>5} {b:>8} {t_rhs * 1e6:>10.1f} {t_int * 1e3:>15.2f} {base / t_int:>8.1f}x")
        if len(rows) > 1:
            a, b = rows["cython"][2], rows["python"][2]
            gap = np.max(np.abs(a.final.values - b.final.values))
            # a step accepted on one backend and rejected on the other shifts
            # the result by up to the integrator tolerance
            print(
                f"{'':>5} max |cython - python| at t = 1: {gap:.2e} "
                f"(steps/rejected {a.steps}/{a.rejected} vs {b.steps}/{b.rejected})"
            )


if __name__ == "__main__":
    main()
