"""Quick by-construction checks shipped with the package.

Each check is a cheap identity (substitution, point-mass kernel, invariant
equilibria, ...) that must hold exactly or to rounding.  ``run`` returns a
list of (name, passed, detail) and the command line maps any failure to a
nonzero exit code.
"""
from __future__ import annotations

import math
import time
from typing import Callable

import numpy as np

from . import dispersion as D
from .greenlab import (DelayedLinearSystem, GreenProbe, delayed_exp, heat_kernel_mass_and_bound,
                       solve_linear_dde)
from .kernels import DiracKernel, LatticeSumKernel
from .lattice import Grid, LatticeStepper, auto_dt
from .models import custom, host_vector, make_builtin

CHECKS: list[tuple[str, Callable[[], str]]] = []


def check(name: str):
    def deco(fn):
        CHECKS.append((name, fn))
        return fn
    return deco


def _expect(cond: bool, detail: str) -> str:
    if not cond:
        raise AssertionError(detail)
    return detail


def _hv(tau: float = 1.0) -> D.Problem:
    return D.Problem(host_vector(0.5, 1.0), DiracKernel(), d=1.0, tau=tau)


@check("host_vector a=0 reduces to Fisher-KPP")
def _fisher_limit():
    m = host_vector(0.0, 1.0)
    u, v = np.array([0.1, 0.4, 0.9]), np.array([0.3, 0.2, 0.7])
    err = float(np.max(np.abs(m.f(u, v) - v * (1 - u))))
    return _expect(m.K == 1.0 and err == 0.0, f"K={m.K}, max |f - v(1-u)|={err:.1e}")


@check("dirac kernel: G = 1, G' = G'' = 0")
def _dirac_G():
    k = DiracKernel()
    g, derivs = k.G(3.7), k.G_derivs(3.7)
    return _expect(g == 1.0 and tuple(derivs) == (0.0, 0.0), f"G(3.7)={g}, derivatives={derivs}")


@check("point-mass kernels discretize to a single unit weight")
def _discrete_point():
    a = DiracKernel().discretize(0.1)
    b = LatticeSumKernel({0: 1.0}).discretize(0.5)
    ok = all(list(x.offsets) == [0] and list(x.weights) == [1.0] for x in (a, b))
    return _expect(ok, f"dirac {a.offsets.tolist()}:{a.weights.tolist()}, "
                       f"lattice_sum {b.offsets.tolist()}:{b.weights.tolist()}")


@check("Delta(c, 0) = -f1(0,0) - f2(0,0)")
def _delta0():
    val = float(D.eval_Delta(_hv(), 1.3, 0.0))
    return _expect(abs(val + 0.5) < 1e-15, f"Delta(1.3, 0) = {val}")


@check("Delta~(c, 0) = f1(K,K) + f2(K,K) < 0")
def _delta_tilde0():
    val = float(D.eval_Delta_tilde(_hv(), 1.3, 0.0))
    return _expect(abs(val + 0.5) < 1e-15, f"Delta~(1.3, 0) = {val}")


@check("double root at the minimal speed")
def _double_root():
    p = _hv()
    cs = D.find_cstar(p)
    l1, l2 = D.find_lambda_roots(p, cs.c_star, cs)
    return _expect(l1 == l2 == cs.lam_star, f"c*={cs.c_star:.10f}, roots=({l1:.10f}, {l2:.10f})")


@check("approach rate with f2(K,K)=0 solves the local equation")
def _upsilon_local():
    m = custom("linear_K", 1.0, f=lambda u, v: (1 - u) + 0 * v,
               d1f=lambda u, v: -1.0 + 0 * u, d2f=lambda u, v: 0 * u)
    p = D.Problem(m, DiracKernel(), d=1.0, tau=0.0)
    ups = D.find_upsilon(p, 1.0)
    res = ups + (math.exp(ups) + math.exp(-ups) - 2) - 1.0
    return _expect(abs(res) < 1e-13, f"upsilon={ups:.12f}, residual={res:.1e}")


@check("N(0) < 0 and the decay rate respects both constraints")
def _decay_constraints():
    p = _hv()
    cs = D.find_cstar(p)
    c = cs.c_star + 0.5
    dr = D.find_decay_rate(p, c, cstar=cs)
    s = 3 * dr.mu - 1e-9
    ok = D.eval_N(p, 0.0) < 0 and D.eval_M(p, c, s, dr.lam) > 0 and D.eval_N(p, s) < 0
    return _expect(ok, f"mu={dr.mu:.6f} at lambda={dr.lam:.6f}")


@check("closed-form rate equations")
def _rate_closed():
    a = D.solve_rate_equation("host_vector", {"a": 0.0, "b": 1.0}, 2.0)
    b = D.solve_rate_equation("age_structured", {"p": 1.0, "gamma": 0.0}, 0.0)
    return _expect(abs(a - 1 / 3) < 1e-15 and abs(b - 1 / 3) < 1e-12, f"{a!r}, {b!r}")


@check("equilibria 0 and K are fixed points of the lattice step")
def _fixed_points():
    m = make_builtin("nicholson", {"delta": 1.0, "p": 2.0, "a": 1.0})
    p = D.Problem(m, DiracKernel(), d=1.0, tau=1.0)
    g = Grid(-10.0, 10.0, m=4)
    worst = 0.0
    for val in (0.0, m.K):
        st = LatticeStepper(p, g, auto_dt(p), lambda x, s, v=val: np.full_like(x, v), boundary="hold")
        for _ in range(100):
            worst = max(worst, float(np.max(np.abs(st.step() - val))))
    return _expect(worst <= 1e-12, f"max deviation {worst:.1e}")


@check("delayed exponential at the tabulated points")
def _delayed_exp():
    vals = (delayed_exp(1.0, 1.0, 0.5), delayed_exp(1.0, 1.0, -0.5), delayed_exp(1.0, 1.0, 1.5))
    ok = abs(vals[0] - 1.5) < 1e-15 and vals[1] == 1.0 and abs(vals[2] - 2.625) < 1e-14
    return _expect(ok, f"E(0.5)={vals[0]}, E(-0.5)={vals[1]}, E(1.5)={vals[2]}")


@check("no delayed term gives a plain exponential")
def _dde_plain():
    sys = DelayedLinearSystem(0.7, 0.0, 1.0)
    z = solve_linear_dde(sys, 3.0)
    return _expect(abs(z - math.exp(-2.1)) < 1e-13, f"z(3)={z!r}")


@check("discrete heat kernel conserves mass")
def _heat_mass():
    errs = [abs(heat_kernel_mass_and_bound(GreenProbe(1.0, 0.5, 0.9, t)).mass - 1.0)
            for t in (0.1, 1.0, 10.0)]
    return _expect(max(errs) < 1e-12, f"max |mass - 1| = {max(errs):.1e}")


def run(verbose: bool = False) -> list[tuple[str, bool, str]]:
    out = []
    for name, fn in CHECKS:
        t0 = time.perf_counter()
        try:
            detail, ok = fn(), True
        except Exception as exc:  # a failing check must not stop the others
            detail, ok = f"{type(exc).__name__}: {exc}", False
        if verbose:
            detail += f" ({time.perf_counter() - t0:.2f}s)"
        out.append((name, ok, detail))
    return out
