"""Linear building blocks behind the decay estimates.

* the delayed exponential E_b(t), fundamental solution of y'(t) = b y(t - tau)
  with y = 1 on [-tau, 0) and y = 0 before -tau;
* the solution formula for z'(t) = -c1 z(t) + c2 z(t - tau);
* the weighted discrete heat kernel with symbol
  q(w) = d eps [(e^lam + e^-lam)(cos w - 1) + i (e^lam - e^-lam) sin w];
* the Fourier-side coefficients c1(w), c2(w) of the linearization at 0 in the
  weighted frame.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial import polynomial as P
from scipy.integrate import quad, solve_ivp

from .dispersion import Problem

Array = np.ndarray


class GreenError(ValueError):
    pass


# --------------------------------------------------------------------------
# delayed exponential


@lru_cache(maxsize=64)
def _pieces(b: float, tau: float, m: int) -> tuple[tuple[float, ...], ...]:
    """Coefficients of E on [(k-1) tau, k tau) in s = t - (k-1) tau, k = 0..m.

    Method of steps: E_k(s) = E_{k-1}(tau) + b int_0^s E_{k-1}.
    """
    if m == 0:
        return ((1.0,),)
    prev = _pieces(b, tau, m - 1)
    last = np.array(prev[-1])
    anti = P.polyint(last) * b
    anti[0] = P.polyval(tau, last)
    return prev + (tuple(anti),)


def delayed_exp(b: float, tau: float, t):
    """E_b(t) for scalar or array t (piecewise polynomial of degree ceil(t/tau))."""
    if not tau > 0:
        raise GreenError(f"delayed exponential needs tau > 0 (got {tau})")
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr)
    flat_t, flat_o = t_arr.ravel(), out.ravel()
    k = np.floor(flat_t / tau + 1e-13).astype(np.int64) + 1  # interval index, 0 on [-tau, 0)
    k = np.where(flat_t < -tau, -1, k)
    if k.size and k.max() >= 0:
        pieces = _pieces(float(b), float(tau), int(k.max()))
        for kk in np.unique(k[k >= 0]):
            sel = k == kk
            s = flat_t[sel] - (kk - 1) * tau
            flat_o[sel] = P.polyval(s, np.array(pieces[kk]))
    out = flat_o.reshape(t_arr.shape)
    return float(out) if np.ndim(t) == 0 else out


def delayed_exp_series(b: float, tau: float, t: float) -> float:
    """Closed sum  sum_{k=0}^{m} b^k (t - (k-1) tau)^k / k!  on [(m-1) tau, m tau)."""
    if t < -tau:
        return 0.0
    if t < 0:
        return 1.0
    m = int(math.floor(t / tau + 1e-13)) + 1
    total, term_fact = 0.0, 1.0
    for k in range(m + 1):
        if k:
            term_fact *= k
        total += b ** k * (t - (k - 1) * tau) ** k / term_fact
    return total


# --------------------------------------------------------------------------
# linear delay equation


@dataclass(frozen=True)
class DelayedLinearSystem:
    """z'(t) = -c1 z(t) + c2 z(t - tau) with history z0 on [-tau, 0]."""

    c1: float
    c2: float
    tau: float
    z0: Callable[[float], float] = lambda s: 1.0
    dz0: Callable[[float], float] = lambda s: 0.0

    def __post_init__(self):
        if not self.tau > 0:
            raise GreenError(f"tau must be positive (got {self.tau})")

    @property
    def c3(self) -> float:
        return self.c2 * math.exp(self.c1 * self.tau)


def solve_linear_dde(sys: DelayedLinearSystem, t: float, epsabs: float = 1e-13,
                     epsrel: float = 1e-12) -> float:
    """Evaluate the delayed-exponential solution formula at t >= 0.

    z(t) = e^{-c1 (t+tau)} E(t) z0(-tau)
           + int_{-tau}^0 e^{-c1 (t-s)} E(t - tau - s) [z0'(s) + c1 z0(s)] ds,

    E the delayed exponential at rate c3 = c2 e^{c1 tau}.
    """
    if t < 0:
        raise GreenError("solve_linear_dde needs t >= 0")
    c1, tau, c3 = sys.c1, sys.tau, sys.c3
    head = math.exp(-c1 * (t + tau)) * delayed_exp(c3, tau, t) * sys.z0(-tau)

    def integrand(s):
        return (math.exp(-c1 * (t - s)) * delayed_exp(c3, tau, t - tau - s)
                * (sys.dz0(s) + c1 * sys.z0(s)))

    # E(t - tau - s) has knots where t - tau - s is a multiple of tau
    knots = sorted({t - tau - k * tau for k in range(-1, int(t / tau) + 3)
                    if -tau < t - tau - k * tau < 0})
    val, err = quad(integrand, -tau, 0.0, points=knots or None, epsabs=epsabs,
                    epsrel=epsrel, limit=200)
    if not math.isfinite(val) or err > 1e-8 * max(1.0, abs(val)):
        raise GreenError(f"quadrature did not converge (error estimate {err:.3g})")
    return head + val


def method_of_steps(sys: DelayedLinearSystem, t: float, rtol: float = 1e-12,
                    atol: float = 1e-14) -> float:
    """Direct integration of the delay equation interval by interval."""
    if t < 0:
        raise GreenError("method_of_steps needs t >= 0")
    if t == 0:
        return float(sys.z0(0.0))
    segs: list = []  # dense outputs on [(k-1) tau, k tau]

    def past(s):
        # s = t - tau can land a rounding error above 0 inside the first interval
        if s <= 1e-12 * sys.tau or not segs:
            return sys.z0(min(s, 0.0))
        k = min(int(s / sys.tau), len(segs) - 1)
        return float(segs[k](s)[0])

    z = float(sys.z0(0.0))
    k = 0
    while k * sys.tau < t:
        a, b = k * sys.tau, min((k + 1) * sys.tau, t)
        sol = solve_ivp(lambda s, y: [-sys.c1 * y[0] + sys.c2 * past(s - sys.tau)], (a, b), [z],
                        method="DOP853", rtol=rtol, atol=atol, dense_output=True)
        segs.append(sol.sol)
        z = float(sol.y[0, -1])
        k += 1
    return z


@dataclass(frozen=True)
class DecayBound:
    C: float
    eps: float
    fit_window: tuple[float, float]
    check_window: tuple[float, float]
    holds: bool
    worst_ratio: float


def fit_decay_bound(c1: float, c2: float, tau: float, fit=(0.0, 50.0), check=(50.0, 100.0),
                    n: int = 501) -> DecayBound:
    """Fit e^{-c1 t} E_{c3}(t) <= C e^{-eps (c1 - c2) t} on ``fit``, test it on ``check``."""
    if not c1 > c2 >= 0:
        raise GreenError("decay bound needs c1 > c2 >= 0")
    c3 = c2 * math.exp(c1 * tau)
    tf = np.linspace(*fit, n)
    g = np.exp(-c1 * tf) * delayed_exp(c3, tau, tf)
    lg = np.log(g)
    half = tf >= 0.5 * (fit[0] + fit[1])
    slope = np.polyfit(tf[half], lg[half], 1)[0]
    eps = min(1.0, max(-slope / (c1 - c2), 1e-12))
    C = float(np.max(g * np.exp(eps * (c1 - c2) * tf)))
    tc = np.linspace(*check, n)
    gc = np.exp(-c1 * tc) * delayed_exp(c3, tau, tc)
    ratio = float(np.max(gc / (C * np.exp(-eps * (c1 - c2) * tc))))
    return DecayBound(C, float(eps), tuple(fit), tuple(check), ratio <= 1.0 + 1e-9, ratio)


# --------------------------------------------------------------------------
# discrete heat kernel


@dataclass(frozen=True)
class GreenProbe:
    d: float
    eps: float
    lam_star: float
    t: float

    def __post_init__(self):
        if not self.d > 0:
            raise GreenError("d must be positive")
        if not 0 < self.eps < 1:
            raise GreenError(f"eps must lie in (0, 1) (got {self.eps})")
        if not self.t > 0:
            raise GreenError(f"t must be positive (got {self.t})")

    def symbol(self, w):
        lam = self.lam_star
        return self.d * self.eps * ((math.exp(lam) + math.exp(-lam)) * (np.cos(w) - 1.0)
                                    + 1j * (math.exp(lam) - math.exp(-lam)) * np.sin(w))


@dataclass(frozen=True)
class HeatKernelResult:
    mass: float
    center: float
    peak: float
    bound: float

    @property
    def ok(self) -> bool:
        return self.peak <= self.bound


def heat_kernel_mass_and_bound(probe: GreenProbe, n: int = 2 ** 12) -> HeatKernelResult:
    """Lattice values v_n(t) from the periodic symbol, sampled on n points.

    mass = sum_n v_n (the symbol at w = 0), center = v_0,
    peak = (1/2pi) int exp(t Re q) dw, bound = sqrt(pi / (d t eps)).
    """
    w = 2 * np.pi * np.arange(n) / n
    w = np.where(w > np.pi, w - 2 * np.pi, w)
    s = np.exp(probe.t * probe.symbol(w))
    v = np.fft.ifft(s)  # v_n = (1/2pi) int s(w) e^{i n w} dw, trapezoid
    mass = float(np.real(v.sum()))
    center = float(np.real(v[0]))
    peak = float(np.mean(np.exp(probe.t * np.real(probe.symbol(w)))))
    bound = math.sqrt(math.pi / (probe.d * probe.t * probe.eps))
    return HeatKernelResult(mass, center, peak, bound)


# --------------------------------------------------------------------------
# Fourier coefficients


def fourier_coefficients(problem: Problem, c_star: float, lam_star: float, w):
    """(c1(w), c2(w)) for scalar or array w."""
    f1, f2 = problem.model.at_zero
    d, tau = problem.d, problem.tau
    z = lam_star + 1j * np.asarray(w, dtype=float)
    c1 = (1j * c_star * np.asarray(w) + c_star * lam_star - f1
          - d * (np.exp(z) + np.exp(-z) - 2.0))
    G = np.vectorize(problem.kernel.G, otypes=[complex])(z)
    c2 = f2 * np.exp(-z * c_star * tau) * G
    return c1, c2


def k2_bound(problem: Problem, c_star: float, lam_star: float) -> float:
    _, f2 = problem.model.at_zero
    return float(f2 * math.exp(-lam_star * c_star * problem.tau) * problem.kernel.G(lam_star))
