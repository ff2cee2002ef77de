"""Independent reference computations used by the tests.

Nothing here calls the library's numerics; formulas are written out again
from the model definitions so that agreement is a real cross-check.
"""
from __future__ import annotations

import math
from fractions import Fraction

import numpy as np
from scipy.integrate import solve_ivp


# --------------------------------------------------------------------------
# dispersion function, written directly from the linearization at 0


def delta_direct(c, lam, d, tau, f1, f2, G):
    """c lam - d (e^lam + e^-lam - 2) - f1 - f2 e^{-lam c tau} G(lam); vectorized in c."""
    return c * lam - d * (np.exp(lam) + np.exp(-lam) - 2.0) - f1 - f2 * np.exp(-lam * c * tau) * G(lam)


def speed_scan(d, tau, f1, f2, G, lam_max, step=1e-4, tol=1e-10, c_hi=100.0):
    """Brute-force minimal speed.

    For every lam on a uniform grid the unique c with Delta(c, lam) = 0 is found
    by bisection (vectorized across the grid); c* and lam* are the minimum and
    its location.
    """
    lam = np.arange(step, lam_max, step)
    Gv = G(lam)
    lo = np.zeros_like(lam)
    hi = np.full_like(lam, c_hi)
    f_lo = delta_direct(lo, lam, d, tau, f1, f2, lambda _: Gv)
    f_hi = delta_direct(hi, lam, d, tau, f1, f2, lambda _: Gv)
    ok = (f_lo < 0) & (f_hi > 0)
    lam, lo, hi, Gv = lam[ok], lo[ok], hi[ok], Gv[ok]
    while np.max(hi - lo) > tol:
        mid = 0.5 * (lo + hi)
        f = delta_direct(mid, lam, d, tau, f1, f2, lambda _: Gv)
        neg = f < 0
        lo = np.where(neg, mid, lo)
        hi = np.where(neg, hi, mid)
    c = 0.5 * (lo + hi)
    k = int(np.argmin(c))
    return float(c[k]), float(lam[k])


# --------------------------------------------------------------------------
# scalar root finding by plain bisection


def bisect(F, a, b, tol=1e-14, maxit=400):
    fa = F(a)
    if fa * F(b) > 0:
        raise ValueError("no sign change")
    for _ in range(maxit):
        m = 0.5 * (a + b)
        fm = F(m)
        if fa * fm <= 0:
            b = m
        else:
            a, fa = m, fm
        if b - a < tol:
            break
    return 0.5 * (a + b)


def minimal_positive_root(F, top, n=200_000):
    x = np.linspace(0.0, top, n + 1)
    v = np.array([F(t) for t in x])
    idx = np.flatnonzero(np.sign(v[1:]) != np.sign(v[:-1]))
    if idx.size == 0:
        raise ValueError("no root on the scan interval")
    k = int(idx[0])
    return bisect(F, x[k], x[k + 1])


# --------------------------------------------------------------------------
# delayed exponential in exact rational arithmetic


def delayed_exp_exact(b: Fraction, tau: Fraction, t: Fraction) -> Fraction:
    """sum_{k=0}^{m} b^k (t - (k-1) tau)^k / k! with (m-1) tau <= t < m tau."""
    if t < -tau:
        return Fraction(0)
    if t < 0:
        return Fraction(1)
    m = int(t // tau) + 1
    return sum((b ** k * (t - (k - 1) * tau) ** k / math.factorial(k) for k in range(m + 1)),
               Fraction(0))


# --------------------------------------------------------------------------
# method of steps for scalar delay equations (own implementation)


def dde_steps(rhs, history, tau, T, rtol=1e-12, atol=1e-14):
    """y'(t) = rhs(y(t), y(t - tau)) with y = history on [-tau, 0]; returns y(T).

    Integrated with LSODA (a different integrator from the library's), one
    delay interval at a time with the previous interval's dense output.
    """
    pieces = []

    def past(s):
        if s <= 0:
            return history(s)
        for a, b, sol in pieces:
            if a - 1e-14 <= s <= b + 1e-14:
                return float(sol(s)[0])
        raise RuntimeError("lookup outside computed range")

    y = float(history(0.0))
    a = 0.0
    while a < T - 1e-14:
        b = min(a + tau, T)
        sol = solve_ivp(lambda s, yy: [rhs(yy[0], past(s - tau))], (a, b), [y], method="LSODA",
                        rtol=rtol, atol=atol, dense_output=True)
        pieces.append((a, b, sol.sol))
        y = float(sol.y[0, -1])
        a = b
    return y


# --------------------------------------------------------------------------
# hand-written RK4 for a 5-node lattice (3 free nodes), no delay


def rk4_three_nodes(u, dt, d, f, left, right):
    """One RK4 step of u_i' = d (u_{i+1} - 2u_i + u_{i-1}) + f(u_i, u_i), i = 1..3.

    Nodes 0 and 4 are held at ``left`` / ``right``.
    """
    def F(w):
        out = [0.0] * 5
        for i in (1, 2, 3):
            out[i] = d * (w[i + 1] - 2 * w[i] + w[i - 1]) + f(w[i], w[i])
        return out

    def axpy(a, x, y):
        return [yi + a * xi for xi, yi in zip(x, y)]

    u = list(u)
    u[0], u[4] = left, right
    k1 = F(u)
    k2 = F(axpy(dt / 2, k1, u))
    k3 = F(axpy(dt / 2, k2, u))
    k4 = F(axpy(dt, k3, u))
    new = [u[i] + dt / 6 * (k1[i] + 2 * k2[i] + 2 * k3[i] + k4[i]) for i in range(5)]
    new[0], new[4] = left, right
    return new
