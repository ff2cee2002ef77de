"""Perturbation experiments around traveling fronts.

A front u = phi(x + c t) is perturbed at t <= 0 and the lab-frame lattice
equation is integrated.  The difference v(x, t) = u(x, t) - phi(x + c t) is
tracked in sup, weighted L1 / L2 and plain L2 norms, with the weight

    w(xi) = exp(-lam (xi - x0))  for xi <= x0,     w(xi) = 1  for xi > x0,

in the co-moving coordinate xi = x + c t.  The threshold x0 is the first grid
point beyond which mu + G1(xi) + e^{mu tau} B(xi) < 0, where
G1 = d1f(phi, h*phi(. - c tau)), G2 = d2f(...) and B = h * G2(. + c tau).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .dispersion import (BelowMinimalSpeedError, Problem, decay_rate_bounds, find_cstar,
                         find_decay_rate)
from .lattice import Grid, LatticeStepper, auto_dt, weighted_norms
from .output import write_csv
from .wavefront import WaveProfile

Array = np.ndarray


class StabilityError(RuntimeError):
    pass


class BoundaryContaminationError(StabilityError):
    pass


# --------------------------------------------------------------------------
# coefficients and weight


@dataclass
class FrontCoefficients:
    xi: Array
    G1: Array
    G2: Array
    B: Array

    def monotone(self, tol: float = 1e-10) -> dict[str, float]:
        """Largest increase between neighbours (should be <= tol)."""
        return {k: float(np.max(np.diff(getattr(self, k)), initial=0.0)) for k in ("G1", "G2", "B")}


def _convolve_at(problem: Problem, profile: WaveProfile, z: Array, tail_tol: float = 1e-12) -> Array:
    dk = problem.kernel.discretize(profile.h, tail_tol)
    y = dk.offsets * dk.spacing
    return np.sum(dk.weights[:, None] * profile(z[None, :] - y[:, None]), axis=0)


def build_front_coefficients(problem: Problem, profile: WaveProfile,
                             xi: Array | None = None) -> FrontCoefficients:
    xi = profile.xi if xi is None else np.asarray(xi, dtype=float)
    c, tau = profile.c, problem.tau
    model = problem.model

    def partials(z):
        phi = profile(z)
        v = _convolve_at(problem, profile, z - c * tau)
        return model.d1f(phi, v), model.d2f(phi, v)

    G1, G2 = partials(xi)
    dk = problem.kernel.discretize(profile.h, 1e-12)
    y = dk.offsets * dk.spacing
    B = np.zeros_like(xi)
    for yy, ww in zip(y, dk.weights):
        B += ww * partials(xi + yy + c * tau)[1]
    return FrontCoefficients(xi, np.asarray(G1, float), np.asarray(G2, float), B)


@dataclass(frozen=True)
class WeightSpec:
    lam: float
    x0: float
    mu: float
    margin: float

    def __call__(self, xi) -> Array:
        xi = np.asarray(xi, dtype=float)
        return np.where(xi <= self.x0, np.exp(-self.lam * np.minimum(xi - self.x0, 0.0)), 1.0)


def weight_constraint(problem: Problem, coeffs: FrontCoefficients, mu: float) -> Array:
    return mu + coeffs.G1 + math.exp(mu * problem.tau) * coeffs.B


def build_weight(problem: Problem, coeffs: FrontCoefficients, c: float, mu: float,
                 lam: float | None = None, margin: float = 1e-6) -> WeightSpec:
    """Threshold x0 and weight exponent for the rate ``mu`` (0 at the critical speed)."""
    cs = find_cstar(problem)
    if lam is None:
        lam = cs.lam_star if c <= cs.c_star * (1 + 1e-12) else find_decay_rate(problem, c, cstar=cs).lam
    g = weight_constraint(problem, coeffs, mu)
    ok = g < -margin
    if not ok[-1]:
        raise StabilityError(
            f"no threshold x0 on the grid: mu + G1 + e^(mu tau) B = {g[-1]:.3g} at the right end")
    bad = np.flatnonzero(~ok)
    k = 0 if bad.size == 0 else int(bad[-1]) + 1
    return WeightSpec(float(lam), float(coeffs.xi[k]), float(mu), margin)


# --------------------------------------------------------------------------
# perturbations


@dataclass
class Perturbation:
    shape: str
    amplitude: float
    location: float
    p: Callable[[Array], Array]
    rate: float | None = None
    delta: float | None = None

    def describe(self) -> dict:
        return {k: v for k, v in (("shape", self.shape), ("amplitude", self.amplitude),
                                  ("location", self.location), ("rate", self.rate),
                                  ("delta", self.delta)) if v is not None}


def make_perturbation(profile: WaveProfile, shape: str = "bump", amplitude: float = 0.1,
                      location: float = 0.0, rate: float | None = None,
                      delta: float = 0.5, width: float = 1.0) -> Perturbation:
    """Perturbation p(x) of the t = 0 front, applied for all s in [-tau, 0].

    ``amplitude`` is relative to K.  Shapes:
      bump           amplitude K exp(-((x - location) / width)^2)
      shift          phi(x + delta) - phi(x)
      left_decaying  amplitude K exp(rate (x - location)) left of ``location``,
                     Gaussian to the right; ``rate`` sets the left decay.
    """
    K = profile.K
    A = amplitude * K
    if shape == "bump":
        p = lambda x: A * np.exp(-(((np.asarray(x) - location) / width) ** 2))
        return Perturbation(shape, amplitude, location, p)
    if shape == "shift":
        p = lambda x: profile(np.asarray(x) + delta) - profile(np.asarray(x))
        return Perturbation(shape, amplitude, location, p, delta=delta)
    if shape == "left_decaying":
        if rate is None or not rate > 0:
            raise StabilityError("left_decaying perturbation needs a positive rate")

        def p(x):
            z = np.asarray(x, dtype=float) - location
            return A * np.where(z <= 0, np.exp(rate * np.minimum(z, 0.0)),
                                np.exp(-((np.maximum(z, 0.0) / width) ** 2)))
        return Perturbation(shape, amplitude, location, p, rate=rate)
    raise StabilityError(f"unknown perturbation shape '{shape}'")


def perturbed_history(profile: WaveProfile, pert: Perturbation, c: float):
    K = profile.K

    def init(x, s):
        return np.clip(profile(x + c * s) + pert.p(x), 0.0, K)
    return init


def perturbation_norms(profile: WaveProfile, pert: Perturbation, weight: WeightSpec,
                       xi: Array) -> dict[str, float]:
    """Weighted L2 and H1 norms of the clipped t = 0 perturbation on ``xi``."""
    phi = profile(xi)
    v = np.clip(phi + pert.p(xi), 0.0, profile.K) - phi
    w = weight(xi)
    h = xi[1] - xi[0]
    dv = np.gradient(v, h)
    l2w = math.sqrt(np.trapezoid(w * v * v, xi))
    h1w = math.sqrt(l2w ** 2 + np.trapezoid(w * dv * dv, xi))
    return {"L2w": l2w, "H1w": h1w, "sup": float(np.max(np.abs(v)))}


# --------------------------------------------------------------------------
# fits


@dataclass(frozen=True)
class DecayFit:
    kind: str
    rate: float
    window: tuple[float, float]
    r2: float
    intercept: float
    n: int

    def as_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate, "window": list(self.window),
                "r2": self.r2, "intercept": self.intercept, "n": self.n}


def _r2(y, yhat) -> float:
    ss = float(np.sum((y - y.mean()) ** 2))
    return 1.0 - float(np.sum((y - yhat) ** 2)) / ss if ss > 0 else 1.0


def fit_decay(t: Array, s: Array, kind: str, window: tuple[float, float]) -> DecayFit:
    """Exponential: log s = a - rate t.  Algebraic: log s = a + rate log t (rate = slope)."""
    t, s = np.asarray(t), np.asarray(s)
    sel = (t >= window[0]) & (t <= window[1]) & (s > 0)
    if sel.sum() < 5:
        raise StabilityError(f"fit window {window} has only {int(sel.sum())} usable samples")
    y = np.log(s[sel])
    x = t[sel] if kind == "exponential" else np.log(t[sel])
    slope, a = np.polyfit(x, y, 1)
    r2 = _r2(y, a + slope * x)
    rate = -slope if kind == "exponential" else slope
    return DecayFit(kind, float(rate), (float(window[0]), float(window[1])), float(r2), float(a),
                    int(sel.sum()))


# --------------------------------------------------------------------------
# experiment


@dataclass
class StabilityResult:
    c: float
    c_star: float
    critical: bool
    mu_pred: float | None
    mu_bounds: tuple[float, float] | None
    weight: WeightSpec
    perturbation: Perturbation
    series: dict[str, Array]
    fit: DecayFit
    floor: float
    squeeze_violation: float | None
    window_xi: tuple[float, float]
    contaminated_after: float | None
    grid: Grid
    dt: float
    sqrt_t_ratio: float | None = None
    info: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {"c": self.c, "c_star": self.c_star, "critical": self.critical,
                "mu_pred": self.mu_pred, "mu_M": None if self.mu_bounds is None else self.mu_bounds[0],
                "mu_N": None if self.mu_bounds is None else self.mu_bounds[1],
                "lambda_w": self.weight.lam, "x0": self.weight.x0,
                "fit": self.fit.as_dict(), "floor": self.floor,
                "squeeze_violation": self.squeeze_violation,
                "sqrt_t_ratio": self.sqrt_t_ratio, "window_xi": list(self.window_xi),
                "contaminated_after": self.contaminated_after,
                "perturbation": self.perturbation.describe(),
                "grid": self.grid.describe(), "dt": self.dt, **self.info}

    def write_series_csv(self, path) -> None:
        cols = ["t", "sup", "L1w", "L2w", "L2"]
        write_csv(path, cols, zip(*(self.series[c] for c in cols)), SERIES_NOTES)


SERIES_NOTES = {
    "t": "time",
    "sup": "max over nodes of |u(x,t) - phi(x+ct)|",
    "L1w": "weighted L1 norm of u - phi(x+ct) over the co-moving window",
    "L2w": "weighted L2 norm of u - phi(x+ct) over the co-moving window",
    "L2": "unweighted L2 norm of u - phi(x+ct) over the co-moving window",
}


def _crossing(x: Array, u: Array, level: float) -> float:
    k = int(np.searchsorted(np.maximum.accumulate(u), level))
    if k == 0 or k >= u.size:
        return float("nan")
    return float(x[k - 1] + (level - u[k - 1]) * (x[k] - x[k - 1]) / (u[k] - u[k - 1]))


def lab_grid(profile: WaveProfile, c: float, T: float, margin: float = 10.0) -> Grid:
    """Lab domain keeping the co-moving profile window inside for t in [0, T]."""
    x_min = math.floor(profile.xi[0] - c * T - margin)
    x_max = math.ceil(profile.xi[-1] + margin)
    return Grid(float(x_min), float(x_max), profile.m)


def run_stability_experiment(problem: Problem, profile: WaveProfile, perturbation: Perturbation,
                             T: float, grid: Grid | None = None, dt: float | None = None,
                             fit_window: tuple[float, float] | None = None,
                             reference: str = "simulated", squeeze: bool = True,
                             window_xi: tuple[float, float] | None = None,
                             record_every: float = 0.25, edge_margin: float = 10.0,
                             lam_w: float | None = None, backend: str | None = None) -> StabilityResult:
    """Perturb the front, integrate to T and fit the decay of sup |v|.

    ``reference`` is 'simulated' (v measured against the lab-frame run started
    from the unperturbed front, which removes the discretization floor) or
    'profile' (v = u - phi(x + c t) directly).  Weighted norms are summed over
    the co-moving window ``window_xi``; the clamped left edge makes the weight
    meaningless far behind it.
    """
    c = profile.c
    cs = find_cstar(problem)
    if c < cs.c_star * (1 - 1e-9):
        raise BelowMinimalSpeedError(
            f"c={c:.10g} is below the minimal speed c*={cs.c_star:.10g}: Delta(c, lambda) < 0 "
            f"for every lambda, so no front exists")
    critical = c <= cs.c_star * (1 + 1e-9)
    if critical:
        mu_pred, bounds, lam = None, None, cs.lam_star
    else:
        dr = find_decay_rate(problem, c, cstar=cs)
        mu_pred, lam = dr.mu, dr.lam
        b = decay_rate_bounds(problem, c, lam)
        bounds = (b.mu_M, b.mu_N)
    if lam_w is not None:
        lam = lam_w
    coeffs = build_front_coefficients(problem, profile)
    weight = build_weight(problem, coeffs, c, 0.0 if critical else mu_pred, lam=lam)
    if grid is None:
        grid = lab_grid(profile, c, T)
    if dt is None:
        dt = auto_dt(problem)
    if fit_window is None:
        fit_window = (10.0, 200.0) if critical else (10.0, 60.0)
    if window_xi is None:
        window_xi = (float(profile.xi[0]) * 0.5, float(grid.x_max))
    x, K = grid.x, problem.K

    init = perturbed_history(profile, perturbation, c)
    front = lambda xx, s: profile(xx + c * s)
    runs = {"u": LatticeStepper(problem, grid, dt, init, backend=backend)}
    if reference == "simulated" or squeeze:
        runs["phi"] = LatticeStepper(problem, grid, dt, front, backend=backend)
    if squeeze:
        runs["lower"] = LatticeStepper(problem, grid, dt,
                                       lambda xx, s: np.minimum(init(xx, s), front(xx, s)),
                                       backend=backend)
        runs["upper"] = LatticeStepper(problem, grid, dt,
                                       lambda xx, s: np.maximum(init(xx, s), front(xx, s)),
                                       backend=backend)
    if reference not in ("simulated", "profile"):
        raise StabilityError(f"unknown reference '{reference}'")

    every = max(1, int(round(record_every / dt)))
    n_steps = int(math.ceil(T / dt - 1e-9))
    rows, times, floor, squeeze_v = [], [], 0.0, 0.0 if squeeze else None
    contaminated = None
    h = grid.spacing
    best_shift = perturbation.shape == "shift"

    def record(t):
        nonlocal floor, contaminated
        u = runs["u"].u
        exact = profile(x + c * t)
        if "phi" in runs:
            floor = max(floor, float(np.max(np.abs(runs["phi"].u - exact))))
        ref = runs["phi"].u if reference == "simulated" else exact
        if best_shift:
            res = minimize_scalar(lambda s: float(np.max(np.abs(u - profile(x + c * t + s)))),
                                  bounds=(-3.0, 3.0), method="bounded",
                                  options={"xatol": 1e-10})
            ref = profile(x + c * t + res.x)
        v = u - ref
        xi = x + c * t
        mask = (xi >= window_xi[0]) & (xi <= window_xi[1])
        sup = float(np.max(np.abs(v)))
        _, l1w, l2w, l2 = weighted_norms(v, weight(xi), h, mask)
        rows.append((sup, l1w, l2w, l2))
        times.append(t)
        pos = _crossing(x, u, K / 2)
        if contaminated is None and (not math.isfinite(pos) or pos - grid.x_min < edge_margin
                                     or grid.x_max - pos < edge_margin):
            contaminated = t

    record(0.0)
    for k in range(1, n_steps + 1):
        for st in runs.values():
            st.step()
        if squeeze:
            lo, up, uu, ph = runs["lower"].u, runs["upper"].u, runs["u"].u, runs["phi"].u
            squeeze_v = max(squeeze_v, float(np.max(lo - uu)), float(np.max(uu - up)),
                            float(np.max(lo - ph)), float(np.max(ph - up)))
        if k % every == 0 or k == n_steps:
            record(runs["u"].t)

    r = np.array(rows)
    series = {"t": np.array(times), "sup": r[:, 0], "L1w": r[:, 1], "L2w": r[:, 2], "L2": r[:, 3]}
    win = fit_window
    if contaminated is not None:
        if contaminated <= win[0]:
            raise BoundaryContaminationError(
                f"front within {edge_margin} units of the boundary at t={contaminated:.3g}")
        win = (win[0], min(win[1], contaminated))
    fit = fit_decay(series["t"], series["sup"], "algebraic" if critical else "exponential", win)
    ratio = None
    if critical:
        sel = (series["t"] >= win[0]) & (series["t"] <= win[1])
        q = series["sup"][sel] * np.sqrt(series["t"][sel])
        ratio = float(q.max() / q.min())
    return StabilityResult(c, cs.c_star, critical, mu_pred, bounds, weight, perturbation, series,
                           fit, floor, squeeze_v, tuple(window_xi), contaminated, grid, dt,
                           sqrt_t_ratio=ratio, info={"reference": reference})


# --------------------------------------------------------------------------
# energy diagnostics


@dataclass(frozen=True)
class EnergyDiagnostics:
    weighted_l1_bounded: bool
    l1_ratio: float
    l2_integral_converged: bool
    tail_fraction: float


def energy_diagnostics(series: dict[str, Array], mu1: float, ratio_limit: float = 10.0,
                       tail_limit: float = 0.05, t_ref: float = 1.0) -> EnergyDiagnostics:
    """Boundedness of e^{mu1 t} |v|_{L1_w} and convergence of int |v|_{L2_w}^2 dt.

    The first is judged by max_t e^{mu1 t} L1w(t) <= ratio_limit * (value at t_ref);
    the second by the share of the integral accrued over the last tenth of the
    horizon.
    """
    t, l1, l2 = series["t"], series["L1w"], series["L2w"]
    k = int(np.argmin(np.abs(t - t_ref)))
    g = np.exp(mu1 * t) * l1
    ref = g[k] if g[k] > 0 else np.finfo(float).tiny
    ratio = float(np.max(g[k:]) / ref)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (l2[1:] ** 2 + l2[:-1] ** 2) * np.diff(t))])
    total = cum[-1]
    j = int(np.searchsorted(t, t[-1] - 0.1 * (t[-1] - t[0])))
    tail = float((total - cum[j]) / total) if total > 0 else 0.0
    return EnergyDiagnostics(ratio <= ratio_limit, ratio, tail <= tail_limit, tail)
