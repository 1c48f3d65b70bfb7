"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--n 16 32] [--repeat 20]

Prints one row per (kernel, grid size) with the median time for each backend,
then times a full skeleton solve under each backend in a subprocess.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tamedns import _kernels_py as pure
from tamedns.config import random_field
from tamedns.spectral import TorusGrid, from_physical, gradient

try:
    from tamedns import _kernels as compiled
except ImportError:
    compiled = None


def kernel_cases(grid):
    u = random_field(grid, 1.5, 6.0, 1)
    phys = np.ascontiguousarray(u.to_physical())
    grad = np.ascontiguousarray(gradient(u.coeffs, grid))
    flux = np.empty((9,) + grid.shape)
    pure.tamed_flux(phys, 1.0, flux)
    fh = np.ascontiguousarray(from_physical(flux))
    k1, k2, k3 = grid.axes
    mask = np.ascontiguousarray(grid.state_mask, dtype=float)
    c = np.ascontiguousarray(u.coeffs)
    r = np.ascontiguousarray(np.sum(phys**2, axis=0).ravel())
    spec_out = np.empty((3,) + grid.spectral_shape, dtype=complex)
    return {
        "taming": lambda m: m.taming(r, 1.0),
        "tamed_flux": lambda m: m.tamed_flux(phys, 1.0, np.empty((9,) + grid.shape)),
        "advect": lambda m: m.advect(phys, grad, np.empty_like(phys)),
        "leray": lambda m: m.leray(c, k1, k2, k3, spec_out),
        "assemble_drift": lambda m: m.assemble_drift(fh, k1, k2, k3, mask, spec_out),
    }


def median_time(fn, repeat):
    fn()
    return float(np.median(timeit.repeat(fn, number=1, repeat=repeat)))


SOLVE = (
    "import time\n"
    "from tamedns.config import random_field\n"
    "from tamedns.spectral import TorusGrid\n"
    "from tamedns.noise import Control, MarkSpace, NoiseCoefficient\n"
    "from tamedns.solver import SolverConfig, solve_skeleton\n"
    "g = TorusGrid({n})\n"
    "u0 = random_field(g, 1.5, 6.0, 1)\n"
    "args = (Control.constant(0.05, 1, 1.0), NoiseCoefficient.zero(g), MarkSpace((1.0,)), SolverConfig(dt=1e-3, T=0.05))\n"
    "t0 = time.perf_counter(); solve_skeleton(u0, *args); print(time.perf_counter() - t0)\n"
)


def solve_time(n, pure_python):
    env = dict(os.environ, TAMEDNS_PURE_PYTHON="1" if pure_python else "0")
    out = subprocess.run([sys.executable, "-c", SOLVE.format(n=n)], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, nargs="+", default=[16, 32])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; run `pip install -e . --no-build-isolation` first")
        return 1
    print(f"{'kernel':<16}{'n':>4}{'cython ms':>12}{'python ms':>12}{'speedup':>9}")
    for n in args.n:
        for name, fn in kernel_cases(TorusGrid(n)).items():
            tc = median_time(lambda: fn(compiled), args.repeat)
            tp = median_time(lambda: fn(pure), args.repeat)
            print(f"{name:<16}{n:>4}{1e3 * tc:>12.3f}{1e3 * tp:>12.3f}{tp / tc:>9.2f}")
    print()
    print(f"{'skeleton solve':<16}{'n':>4}{'cython s':>12}{'python s':>12}{'speedup':>9}")
    for n in args.n:
        tc, tp = solve_time(n, False), solve_time(n, True)
        print(f"{'50 steps':<16}{n:>4}{tc:>12.3f}{tp:>12.3f}{tp / tc:>9.2f}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
