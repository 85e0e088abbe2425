"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 50] [--solve]

Times each kernel on two grid sizes and, with ``--solve``, a full ground-state
solve under each backend (run in a subprocess so the backend choice is made
at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from nehari import _fallback
from nehari.grid import CylGrid, operator_for
from nehari.model import builtin_potential

try:
    from nehari import _kernels
except ImportError:
    _kernels = None

SOLVE_SNIPPET = """
import time
from nehari import BACKEND
from nehari.model import ProblemSpec, builtin_potential, builtin_nonlinearity
from nehari.solver import solve_ground_state
spec = ProblemSpec(builtin_potential("constant", [1.0]), builtin_nonlinearity("kerr", [1.0]))
t = time.perf_counter()
sol = solve_ground_state(spec)
print(BACKEND, time.perf_counter() - t, sol.iterations, repr(sol.c))
"""


def kernel_cases(n_r, n_s):
    grid = CylGrid(n_r, n_s, 16.0, 32.0)
    op = operator_for(grid, builtin_potential("constant", [1.0]), 1.0)
    rng = np.random.default_rng(0)
    u = rng.standard_normal(grid.shape)
    v = rng.standard_normal(grid.shape)
    w = grid.weights

    def cases(mod):
        x, r = u.copy(), v.copy()
        return {
            "apply_stencil": lambda: mod.apply_stencil(u, op.diag, op.cp, op.cm, op.cs),
            "weighted_dot": lambda: mod.weighted_dot(u, v, w),
            "cg_update": lambda: mod.cg_update(x, r, u, v, 1e-3),
        }
    return cases


def bench_kernels(repeat):
    print(f"{'grid':>10} {'kernel':>14} {'python [us]':>12} {'cython [us]':>12} {'speedup':>8}")
    for n_r, n_s in [(128, 256), (256, 512)]:
        cases = kernel_cases(n_r, n_s)
        py = cases(_fallback)
        cy = cases(_kernels) if _kernels is not None else {}
        label = f"{n_r}x{n_s}"
        for name, fn in py.items():
            t_py = min(timeit.repeat(fn, number=repeat, repeat=3)) / repeat * 1e6
            if name in cy:
                t_cy = min(timeit.repeat(cy[name], number=repeat, repeat=3)) / repeat * 1e6
                print(f"{label:>10} {name:>14} {t_py:12.1f} {t_cy:12.1f} {t_py / t_cy:8.2f}")
            else:
                print(f"{label:>10} {name:>14} {t_py:12.1f} {'n/a':>12} {'':>8}")


def bench_solve():
    for pure in ("1", "0"):
        env = dict(os.environ, NEHARI_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", SOLVE_SNIPPET], env=env, capture_output=True,
                             text=True, check=True).stdout.split()
        print(f"solve 128x256 backend={out[0]:>6}: {float(out[1]):.2f} s, {out[2]} iterations, c = {out[3]}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--solve", action="store_true", help="also time a full solve per backend")
    args = ap.parse_args()
    if _kernels is None:
        print("compiled kernels not built; timing the fallback only")
    bench_kernels(args.repeat)
    if args.solve:
        bench_solve()


if __name__ == "__main__":
    main()
