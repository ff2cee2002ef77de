"""Characteristic functions of the linearized lattice equation and their roots.

At the unstable state 0 a tail e^{lam xi} of a front moving with speed c must
satisfy Delta(c, lam) = 0 with

    Delta(c, lam) = c lam - d (e^lam + e^-lam - 2) - f1(0) - f2(0) e^{-lam c tau} G(lam),

and at the stable state K a tail K - e^{-lam xi} must satisfy

    Delta~(c, lam) = c lam + d (e^lam + e^-lam - 2) + f1(K) + f2(K) e^{lam c tau} G(-lam).

c* is the smallest speed with a real root of Delta(c, .) and lam* the double
root there.  Decay rates of perturbations are bounded through the auxiliary
functions M(c, mu) and N(mu).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .kernels import DiracKernel, Kernel
from .models import Model


@dataclass(frozen=True)
class Tolerances:
    root_residual: float = 1e-10
    tangency: float = 1e-8
    fd_step: float = 1e-6
    xtol: float = 1e-14


TOL = Tolerances()


class DispersionError(ValueError):
    pass


class BelowMinimalSpeedError(DispersionError):
    """c < c*: Delta(c, lam) < 0 for every lam >= 0, so no front and no real tail rate."""


class AbscissaLimitedError(DispersionError):
    pass


@dataclass(frozen=True)
class Problem:
    model: Model
    kernel: Kernel = field(default_factory=DiracKernel)
    d: float = 1.0
    tau: float = 0.0

    def __post_init__(self):
        if not self.d > 0:
            raise DispersionError(f"coupling d must be positive (got {self.d})")
        if not self.tau >= 0:
            raise DispersionError(f"delay tau must be nonnegative (got {self.tau})")
        mt = self.model.params.get("tau")
        if mt is not None and abs(float(mt) - self.tau) > 1e-12:
            raise DispersionError(
                f"model was built with tau={mt} but the problem uses tau={self.tau}")

    @property
    def K(self) -> float:
        return self.model.K

    @property
    def lambda_plus(self) -> float:
        _, d2 = self.model.at_zero
        return self.kernel.lambda0 if d2 > 0 else math.inf

    def describe(self) -> dict:
        return {"model": self.model.describe(), "kernel": self.kernel.describe(),
                "d": self.d, "tau": self.tau}


def _lap_symbol(lam):
    return np.exp(lam) + np.exp(-lam) - 2.0


def eval_Delta(problem: Problem, c: float, lam: float) -> float:
    f1, f2 = problem.model.at_zero
    if not lam < problem.lambda_plus:
        raise DispersionError(f"lambda={lam} not below lambda_plus={problem.lambda_plus}")
    G = problem.kernel.G(lam)
    return c * lam - problem.d * _lap_symbol(lam) - f1 - f2 * np.exp(-lam * c * problem.tau) * G


def dDelta_dlam(problem: Problem, c: float, lam: float) -> float:
    _, f2 = problem.model.at_zero
    tau = problem.tau
    G = problem.kernel.G(lam)
    Gp, _ = problem.kernel.G_derivs(lam)
    e = math.exp(-lam * c * tau)
    return c - problem.d * (math.exp(lam) - math.exp(-lam)) - f2 * e * (Gp - c * tau * G)


def dDelta_dc(problem: Problem, c: float, lam: float) -> float:
    _, f2 = problem.model.at_zero
    tau = problem.tau
    return lam + lam * tau * f2 * math.exp(-lam * c * tau) * problem.kernel.G(lam)


def eval_Delta_tilde(problem: Problem, c: float, lam: float) -> float:
    f1, f2 = problem.model.at_K
    G = problem.kernel.G(-lam)
    return c * lam + problem.d * _lap_symbol(lam) + f1 + f2 * np.exp(lam * c * problem.tau) * G


def eval_M(problem: Problem, c: float, mu: float, lam: float) -> float:
    f1, f2 = problem.model.at_zero
    G = problem.kernel.G(lam)
    return (c * lam - problem.d * _lap_symbol(lam) - f1 - mu
            - f2 * math.exp((mu - c * lam) * problem.tau) * G)


def eval_N(problem: Problem, mu: float) -> float:
    f1, f2 = problem.model.at_K
    return mu + f1 + math.exp(mu * problem.tau) * f2


# --------------------------------------------------------------------------
# minimal speed


def speed_for_rate(problem: Problem, lam: float) -> float:
    """The unique c with Delta(c, lam) = 0 for a fixed lam > 0."""
    if lam <= 0:
        raise DispersionError("speed_for_rate needs lam > 0")
    lo = 0.0
    if eval_Delta(problem, lo, lam) >= 0:
        raise DispersionError(
            f"Delta(0, {lam}) >= 0: no sign change in c; the model is not monostable here")
    hi = 1.0
    while eval_Delta(problem, hi, lam) <= 0:
        hi *= 2.0
        if hi > 1e12:
            raise DispersionError(f"no speed solves Delta(c, {lam}) = 0")
    return brentq(lambda c: eval_Delta(problem, c, lam), lo, hi, xtol=1e-15, rtol=1e-15)


class MinimalSpeed(NamedTuple):
    c_star: float
    lam_star: float


def _lam_ceiling(problem: Problem) -> float:
    lp = problem.lambda_plus
    return min(lp - 1e-6, 60.0) if math.isfinite(lp) else 60.0


def find_cstar(problem: Problem) -> MinimalSpeed:
    """Tangency point of Delta: minimize c(lam) then polish dDelta/dlam = 0."""
    ceiling = _lam_ceiling(problem)
    L = min(4.0, ceiling)
    while True:
        lams = np.linspace(0.0, L, 241)[1:]
        cs = np.array([speed_for_rate(problem, l) for l in lams])
        k = int(np.argmin(cs))
        if k < lams.size - 1:
            break
        if L >= ceiling:
            raise DispersionError(
                "c(lambda) keeps decreasing up to lambda_plus; no interior minimum")
        L = min(2.0 * L, ceiling)
    a = lams[k - 1] if k > 0 else lams[0] * 1e-3
    b = lams[k + 1]
    res = minimize_scalar(lambda l: speed_for_rate(problem, l), bounds=(a, b),
                          method="bounded", options={"xatol": 1e-12})
    lam0 = float(res.x)

    def slope(l):
        return dDelta_dlam(problem, speed_for_rate(problem, l), l)

    # dDelta/dlam changes sign from + to - across the minimizer of c(lam)
    lo, hi = max(a, lam0 - 1e-3), min(b, lam0 + 1e-3)
    if slope(lo) > 0 > slope(hi):
        lam_star = brentq(slope, lo, hi, xtol=1e-15, rtol=1e-15)
    elif slope(a) > 0 > slope(b):
        lam_star = brentq(slope, a, b, xtol=1e-15, rtol=1e-15)
    else:
        lam_star = lam0
    c_star = speed_for_rate(problem, lam_star)
    return MinimalSpeed(c_star, lam_star)


# --------------------------------------------------------------------------
# tail rates


class RatePair(NamedTuple):
    lam1: float
    lam2: float


def _upper_bracket(problem: Problem, c: float, start: float) -> float:
    ceiling = _lam_ceiling(problem)
    hi = max(2.0 * start, start + 1.0)
    while eval_Delta(problem, c, min(hi, ceiling)) >= 0:
        if hi >= ceiling:
            raise AbscissaLimitedError("Delta(c, .) stays positive up to lambda_plus")
        hi *= 2.0
    return min(hi, ceiling)


def find_lambda_roots(problem: Problem, c: float, cstar: MinimalSpeed | None = None) -> RatePair:
    """lam1(c) <= lam* <= lam2(c), the two positive roots of Delta(c, .)."""
    cs, ls = cstar or find_cstar(problem)
    if c < cs * (1 - 1e-13) - 1e-13:
        raise BelowMinimalSpeedError(
            f"c={c:.12g} is below the minimal speed c*={cs:.12g}: Delta(c, lambda) < 0 "
            f"for every lambda >= 0, so there is no real tail rate and no front")
    if c - cs <= 1e-13 * max(1.0, cs):
        return RatePair(ls, ls)
    F = lambda l: eval_Delta(problem, c, l)
    if F(ls) <= 0:
        return RatePair(ls, ls)
    lo = min(1e-8, 1e-3 * ls)
    lam1 = brentq(F, lo, ls, xtol=1e-15, rtol=1e-15)
    lam2 = brentq(F, ls, _upper_bracket(problem, c, ls), xtol=1e-15, rtol=1e-15)
    return RatePair(lam1, lam2)


def find_upsilon(problem: Problem, c: float) -> float:
    """Unique positive zero of Delta~(c, .), the approach rate of a front to K."""
    if c < 0:
        raise DispersionError("find_upsilon needs c >= 0")
    F = lambda l: eval_Delta_tilde(problem, c, l)
    if F(0.0) >= 0:
        raise DispersionError("Delta~(c, 0) = f1(K) + f2(K) must be negative")
    lam0 = problem.kernel.lambda0
    hi = 1.0
    while True:
        top = min(hi, lam0 - 1e-9) if math.isfinite(lam0) else hi
        if F(top) > 0:
            break
        if top < hi or hi > 1e4:
            raise AbscissaLimitedError(
                "no sign change of Delta~ below the kernel abscissa lambda0")
        hi *= 2.0
    return brentq(F, 0.0, top, xtol=1e-15, rtol=1e-15)


# --------------------------------------------------------------------------
# decay rates


class DecayRate(NamedTuple):
    mu: float
    lam: float


class RateBounds(NamedTuple):
    mu_M: float  # sup of mu with M(c, 3 mu) > 0
    mu_N: float  # sup of mu with N(3 mu) < 0


def _rate_bounds_at(problem: Problem, c: float, lam: float) -> RateBounds:
    M0 = eval_M(problem, c, 0.0, lam)
    if M0 <= 0:
        mu_M = 0.0
    else:
        hi = M0 + 1.0
        while eval_M(problem, c, hi, lam) > 0:
            hi *= 2.0
        mu_M = brentq(lambda s: eval_M(problem, c, s, lam), 0.0, hi, xtol=1e-15) / 3.0
    f1K, f2K = problem.model.at_K
    N0 = eval_N(problem, 0.0)
    if N0 >= 0:
        raise DispersionError("N(0) = f1(K) + f2(K) must be negative")
    if f2K == 0:
        mu_N = -f1K / 3.0
    else:
        hi = -f1K + 1.0
        while eval_N(problem, hi) < 0:
            hi *= 2.0
        mu_N = brentq(lambda s: eval_N(problem, s), 0.0, hi, xtol=1e-15) / 3.0
    return RateBounds(mu_M, mu_N)


def decay_rate_bounds(problem: Problem, c: float, lam: float) -> RateBounds:
    """Separate M- and N-feasible rate bounds for a weight exponent lam."""
    return _rate_bounds_at(problem, c, lam)


def find_decay_rate(problem: Problem, c: float, n_lambda: int = 64,
                    cstar: MinimalSpeed | None = None) -> DecayRate:
    """Best guaranteed exponential rate mu over weight exponents in (lam1(c), lam*]."""
    cs = cstar or find_cstar(problem)
    if c <= cs.c_star * (1 + 1e-12):
        raise BelowMinimalSpeedError(
            f"c={c:.12g} does not exceed c*={cs.c_star:.12g}; only algebraic decay is "
            f"available at the critical speed (use the critical mode)")
    lam1, _ = find_lambda_roots(problem, c, cs)
    lams = lam1 + (cs.lam_star - lam1) * np.arange(1, n_lambda + 1) / n_lambda
    best = DecayRate(-math.inf, float("nan"))
    for lam in lams:
        b = _rate_bounds_at(problem, c, float(lam))
        mu = min(b.mu_M, b.mu_N)
        if mu > best.mu:
            best = DecayRate(mu, float(lam))
    if not best.mu > 0:
        raise DispersionError("no positive decay rate found")
    return best


# --------------------------------------------------------------------------
# closed rate equations for the application models


def _minimal_positive_root(F, scale: float, limit: float = 1e3) -> float:
    if F(0.0) >= 0:
        raise DispersionError("rate equation is nonnegative at mu = 0")
    top = scale
    while top <= limit * max(1.0, scale):
        grid = np.linspace(0.0, top, 4001)
        try:
            vals = np.array([F(x) for x in grid])
        except OverflowError:
            break  # the exponential term has taken over without a sign change
        idx = np.nonzero(vals > 0)[0]
        if idx.size:
            k = int(idx[0])
            return brentq(F, grid[k - 1], grid[k], xtol=1e-15, rtol=1e-15)
        top *= 4.0
    raise DispersionError("rate equation has no positive root")


def rate_equation(kind: str, params: dict, tau: float, convention: str = "printed"):
    """Return F(mu) whose minimal positive root bounds the decay rate.

    For ``nicholson`` two conventions exist: ``printed`` is
    3mu - delta - delta e^{3 mu tau}(1 + ln delta - ln p) and ``n_bound`` is
    N(3 mu) = 3mu - delta + delta e^{3 mu tau}(1 + ln delta - ln p); they differ
    in the sign of the delayed term.
    """
    if kind == "host_vector":
        a, b = float(params["a"]), float(params["b"])
        if not (b > a >= 0):
            raise DispersionError("host_vector rate equation needs b > a >= 0")
        return lambda mu: 3 * mu + a * math.exp(3 * mu * tau) - b, b / 3.0
    if kind == "age_structured":
        p, gamma = float(params["p"]), float(params["gamma"])
        delta = float(params.get("delta", 1.0))
        if not (p > 0 and gamma >= 0 and delta > 0):
            raise DispersionError("age_structured rate equation needs p, delta > 0, gamma >= 0")
        q = p * math.exp(-gamma * tau)
        return lambda mu: 3 * mu + q * (math.exp(3 * mu * tau) - 2.0), 2 * q / 3.0
    if kind == "nicholson":
        delta, p = float(params["delta"]), float(params["p"])
        if not (p > delta > 0):
            raise DispersionError("nicholson rate equation needs p > delta > 0")
        if not delta * (math.log(p) - math.log(delta)) < 2 * delta - p:
            raise DispersionError(
                "nicholson rate equation needs delta (ln p - ln delta) < 2 delta - p")
        kappa = 1.0 + math.log(delta) - math.log(p)
        if convention == "printed":
            return lambda mu: 3 * mu - delta - delta * math.exp(3 * mu * tau) * kappa, delta
        if convention == "n_bound":
            return lambda mu: 3 * mu - delta + delta * math.exp(3 * mu * tau) * kappa, delta
        raise DispersionError(f"unknown convention '{convention}'")
    raise DispersionError(f"no rate equation for model '{kind}'")


def solve_rate_equation(kind: str, params: dict, tau: float, convention: str = "printed") -> float:
    F, scale = rate_equation(kind, params, tau, convention)
    if kind == "host_vector" and float(params["a"]) == 0.0:
        return float(params["b"]) / 3.0
    return _minimal_positive_root(F, scale)


# --------------------------------------------------------------------------
# report


@dataclass
class DispersionReport:
    c_star: float
    lam_star: float
    lam_plus: float
    speeds: list[float]
    lam1: list[float]
    lam2: list[float]
    upsilon: list[float]
    mu: list[float | None]
    mu_lam: list[float | None]
    residuals: dict

    def as_dict(self) -> dict:
        def clean(x):
            if isinstance(x, float) and not math.isfinite(x):
                return None if math.isnan(x) else "inf"
            return x
        return {
            "c_star": self.c_star,
            "lambda_star": self.lam_star,
            "lambda_plus": clean(self.lam_plus),
            "table": [
                {"c": c, "lambda1": l1, "lambda2": l2, "upsilon": u, "mu": m, "mu_lambda": ml}
                for c, l1, l2, u, m, ml in zip(self.speeds, self.lam1, self.lam2,
                                               self.upsilon, self.mu, self.mu_lam)
            ],
            "residuals": self.residuals,
        }


def analyze(problem: Problem, speeds: Sequence[float] = (), offsets: Sequence[float] = ()) -> DispersionReport:
    """Minimal speed plus tail and decay rates at the requested speeds.

    ``offsets`` are added to c* and appended to ``speeds``.
    """
    cs = find_cstar(problem)
    all_c = [float(c) for c in speeds] + [cs.c_star + float(o) for o in offsets]
    l1s, l2s, ups, mus, mls = [], [], [], [], []
    res = {
        "Delta_at_tangency": abs(float(eval_Delta(problem, cs.c_star, cs.lam_star))),
        "dDelta_dlambda_at_tangency": abs(dDelta_dlam(problem, cs.c_star, cs.lam_star)),
        "roots": [],
    }
    for c in all_c:
        l1, l2 = find_lambda_roots(problem, c, cs)
        u = find_upsilon(problem, c)
        if c > cs.c_star * (1 + 1e-12):
            dr = find_decay_rate(problem, c, cstar=cs)
            m, ml = dr.mu, dr.lam
        else:
            m, ml = None, None
        l1s.append(l1)
        l2s.append(l2)
        ups.append(u)
        mus.append(m)
        mls.append(ml)
        res["roots"].append({
            "c": c,
            "Delta_lambda1": abs(float(eval_Delta(problem, c, l1))),
            "Delta_lambda2": abs(float(eval_Delta(problem, c, l2))),
            "Delta_tilde_upsilon": abs(float(eval_Delta_tilde(problem, c, u))),
        })
    return DispersionReport(cs.c_star, cs.lam_star, problem.lambda_plus, all_c,
                            l1s, l2s, ups, mus, mls, res)


def delta_samples(problem: Problem, speeds: Sequence[float], lams: np.ndarray) -> np.ndarray:
    """Delta(c, lam) on a (len(speeds), len(lams)) grid."""
    return np.array([[float(eval_Delta(problem, c, l)) for l in lams] for c in speeds])
