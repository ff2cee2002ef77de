"""Compiled vs numpy kernels: right-hand side evaluation and full RK4 runs.

    python benchmarks/bench_rhs.py [--repeat 20]
"""
import argparse
import time

import numpy as np

from latwave import _backend
from latwave.dispersion import Problem
from latwave.kernels import DiracKernel, GaussianKernel
from latwave.lattice import Grid, auto_dt, integrate
from latwave.models import host_vector, nicholson


def _best(fn, repeat):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_rhs(kern, n, offsets, weights, model, repeat):
    rng = np.random.default_rng(1)
    u = rng.uniform(0, model.K, n)
    conv = np.empty(n)
    out = np.empty(n)
    params = np.asarray(model.kernel_params, dtype=float)

    def once():
        kern.sym_convolve(u, offsets, weights, 0.0, model.K, conv)
        kern.lattice_rhs(u, conv, out, 1.0, 10, 10, n - 11, model.kind, params)
    return _best(once, repeat)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if _backend.compiled is None:
        print("compiled extension not built; only the numpy kernels are available")
        return
    cases = [("host_vector dirac", host_vector(0.5, 1.0), DiracKernel()),
             ("nicholson gaussian(0.25)", nicholson(1.0, 2.0, 1.0), GaussianKernel(0.25))]
    print(f"{'case':<28}{'nodes':>8}{'python [ms]':>14}{'cython [ms]':>14}{'speedup':>10}")
    for label, model, kernel in cases:
        dk = kernel.discretize(0.1, 1e-10)
        offs = np.ascontiguousarray(dk.offsets, dtype=np.int64)
        w = np.ascontiguousarray(dk.weights, dtype=float)
        for n in (2_000, 20_000, 200_000):
            tp = bench_rhs(_backend.python, n, offs, w, model, args.repeat)
            tc = bench_rhs(_backend.compiled, n, offs, w, model, args.repeat)
            print(f"{label:<28}{n:>8}{1e3 * tp:>14.3f}{1e3 * tc:>14.3f}{tp / tc:>10.1f}")
    print()
    print("full run: host_vector tau=1, 3000 nodes, T=20")
    p = Problem(host_vector(0.5, 1.0), DiracKernel(), d=1.0, tau=1.0)
    g = Grid(-150.0, 150.0, m=10)
    init = lambda x, s: np.where(x >= 0, p.K, 0.0)
    for name in ("python", "cython"):
        t0 = time.perf_counter()
        integrate(p, g, auto_dt(p), 20.0, init, backend=name)
        print(f"  {name:<8}{time.perf_counter() - t0:8.3f} s")


if __name__ == "__main__":
    main()
