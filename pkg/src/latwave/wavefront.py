"""Monotone traveling-wave profiles phi(xi), xi = x + c t, solving

    -c phi'(xi) + d (phi(xi+1) - 2 phi(xi) + phi(xi-1)) + f(phi(xi), (h*phi)(xi - c tau)) = 0,

with phi(-inf) = 0 and phi(+inf) = K.

The profile is first relaxed in the moving frame (first-order upwind advection,
RK4 in pseudo-time), then polished by Gauss-Newton on the same equation with a
fourth-order central derivative.  Values beyond the sampled window come from
the tail laws phi ~ phi_0 e^{lam (xi - xi_0)} on the left and
K - phi ~ (K - phi_N) e^{-upsilon (xi - xi_N)} on the right.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp
from scipy.interpolate import CubicSpline
from scipy.sparse.linalg import spsolve

from .output import write_csv
from .dispersion import (BelowMinimalSpeedError, Problem, find_cstar, find_lambda_roots,
                         find_upsilon)

Array = np.ndarray


class ProfileError(RuntimeError):
    pass


class NotConvergedError(ProfileError):
    def __init__(self, msg: str, info: dict | None = None):
        super().__init__(msg)
        self.info = info or {}


class TailResolutionError(ProfileError):
    pass


# --------------------------------------------------------------------------
# linear part of the profile operator


def _lagrange4(theta: float) -> tuple[list[int], list[float]]:
    """Weights on node offsets (+1, 0, -1, -2) for the point at -theta, 0 <= theta < 1."""
    x = -theta
    nodes = [1.0, 0.0, -1.0, -2.0]
    w = []
    for a in nodes:
        p = 1.0
        for b in nodes:
            if b != a:
                p *= (x - b) / (a - b)
        w.append(p)
    return [1, 0, -1, -2], w


def delayed_stencil(problem: Problem, c: float, m: int, tail_tol: float = 1e-12) -> tuple[Array, Array]:
    """Node offsets l and weights W with (h*phi)(xi_i - c tau) ~ sum_l W_l phi_{i+l}."""
    h = 1.0 / m
    dk = problem.kernel.discretize(h, tail_tol)
    shift = c * problem.tau / h
    acc: dict[int, float] = {}
    for o, w in zip(dk.offsets, dk.weights):
        total = shift + float(o)  # phi(xi_i - total * h)
        q = math.floor(total + 1e-12)
        theta = total - q
        if theta < 1e-12:
            acc[-q] = acc.get(-q, 0.0) + w
            continue
        offs, lw = _lagrange4(theta)
        for k, lwk in zip(offs, lw):
            acc[k - q] = acc.get(k - q, 0.0) + w * lwk
    keys = np.array(sorted(acc), dtype=int)
    return keys, np.array([acc[k] for k in keys])


def _band(n: int, g: int, offsets, weights) -> sp.csr_matrix:
    """(n, n + 2g) matrix mapping the ghost-extended vector to sum_l w_l Phi[i + l]."""
    return sp.diags([np.full(n, w) for w in weights], [g + int(o) for o in offsets],
                    shape=(n, n + 2 * g), format="csr")


@dataclass
class ProfileOperator:
    """R(phi) = A phi + a_b + f(phi, V phi + v_b) on a uniform xi grid."""

    problem: Problem
    c: float
    xi: Array
    m: int
    lam_left: float | None
    upsilon: float | None
    derivative: str = "central4"
    ghosts: str = "tails"

    def __post_init__(self):
        n, m = self.xi.size, self.m
        h = 1.0 / m
        K = self.problem.K
        v_off, v_w = delayed_stencil(self.problem, self.c, m)
        if self.derivative == "central4":
            d_off, d_w = [-2, -1, 1, 2], np.array([1.0, -8.0, 8.0, -1.0]) / (12 * h)
        elif self.derivative == "upwind":
            d_off, d_w = ([-1, 0], [-1.0 / h, 1.0 / h]) if self.c >= 0 else ([0, 1], [-1.0 / h, 1.0 / h])
        else:
            raise ProfileError(f"unknown derivative '{self.derivative}'")
        g = max(m, 2, int(np.max(np.abs(v_off))))
        self.g = g
        # ghost extension Phi = P phi + b
        rows, cols, vals = list(range(g, g + n)), list(range(n)), [1.0] * n
        b = np.zeros(n + 2 * g)
        k = np.arange(1, g + 1)
        if self.ghosts == "tails":
            if self.lam_left is None or self.upsilon is None:
                raise ProfileError("tail ghosts need both tail rates")
            left = np.exp(-self.lam_left * k * h)  # node -k
            right = np.exp(-self.upsilon * k * h)  # node n-1+k
            rows += list(g - k) + list(g + n - 1 + k)
            cols += [0] * g + [n - 1] * g
            vals += list(left) + list(right)
            b[g + n - 1 + k] = K * (1.0 - right)
        elif self.ghosts == "constant":
            rows += list(g - k) + list(g + n - 1 + k)
            cols += [0] * g + [n - 1] * g
            vals += [1.0] * (2 * g)
        elif self.ghosts == "dirichlet":
            b[g + n - 1 + k] = K
        else:
            raise ProfileError(f"unknown ghost rule '{self.ghosts}'")
        P = sp.csr_matrix((vals, (rows, cols)), shape=(n + 2 * g, n))
        D = _band(n, g, d_off, d_w)
        L = _band(n, g, [-m, 0, m], [self.problem.d, -2 * self.problem.d, self.problem.d])
        V = _band(n, g, v_off, v_w)
        A_ext = (-self.c) * D + L
        self.A = (A_ext @ P).tocsr()
        self.a_b = A_ext @ b
        self.V = (V @ P).tocsr()
        self.v_b = V @ b
        self.D = (D @ P).tocsr()
        self.d_b = D @ b

    def delayed(self, phi: Array) -> Array:
        return self.V @ phi + self.v_b

    def residual(self, phi: Array) -> Array:
        model = self.problem.model
        return self.A @ phi + self.a_b + model.f(phi, self.delayed(phi))

    def jacobian(self, phi: Array) -> sp.csr_matrix:
        model = self.problem.model
        v = self.delayed(phi)
        return (self.A + sp.diags(model.d1f(phi, v)) + sp.diags(model.d2f(phi, v)) @ self.V).tocsr()

    def slope(self, phi: Array) -> Array:
        return self.D @ phi + self.d_b


# --------------------------------------------------------------------------
# profile container


@dataclass
class WaveProfile:
    c: float
    xi: Array
    phi: Array
    K: float
    lam_left: float
    upsilon: float
    m: int
    residual_sup: float = float("nan")
    residual_L2: float = float("nan")
    left_slope: float = float("nan")
    right_slope: float = float("nan")
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        self._spline = CubicSpline(self.xi, self.phi)

    def __call__(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        lo, hi = self.xi[0], self.xi[-1]
        a, b = x < lo, x > hi
        mid = ~(a | b)
        out[mid] = self._spline(x[mid])
        out[a] = self.phi[0] * np.exp(self.lam_left * (x[a] - lo))
        out[b] = self.K - (self.K - self.phi[-1]) * np.exp(-self.upsilon * (x[b] - hi))
        return out

    def derivative(self, x) -> Array:
        x = np.asarray(x, dtype=float)
        out = np.empty_like(x)
        lo, hi = self.xi[0], self.xi[-1]
        a, b = x < lo, x > hi
        mid = ~(a | b)
        out[mid] = self._spline(x[mid], 1)
        out[a] = self.lam_left * self.phi[0] * np.exp(self.lam_left * (x[a] - lo))
        out[b] = self.upsilon * (self.K - self.phi[-1]) * np.exp(-self.upsilon * (x[b] - hi))
        return out

    def shifted(self, delta: float) -> "WaveProfile":
        """The profile xi -> phi(xi + delta), same samples on a relabeled grid."""
        return replace(self, xi=self.xi - delta, info=dict(self.info))

    @property
    def h(self) -> float:
        return 1.0 / self.m

    def level_position(self, level: float | None = None) -> float:
        """xi where phi crosses ``level`` (default K/2), linear interpolation."""
        return _crossing(self.xi, self.phi, self.K / 2 if level is None else level)

    @property
    def monotonicity_margin(self) -> float:
        return float(np.min(np.diff(self.phi)))

    def diagnostics(self) -> dict:
        return {"c": self.c, "K": self.K, "m": self.m, "xi_min": float(self.xi[0]),
                "xi_max": float(self.xi[-1]), "residual_sup": self.residual_sup,
                "residual_L2": self.residual_L2, "left_slope": self.left_slope,
                "right_slope": self.right_slope, "lambda_left": self.lam_left,
                "upsilon": self.upsilon, "min_forward_difference": self.monotonicity_margin,
                **{k: v for k, v in self.info.items() if isinstance(v, (int, float, str, bool))}}

    def write_csv(self, path) -> None:
        write_csv(path, ["xi", "phi", "dphi"], zip(self.xi, self.phi, self.derivative(self.xi)),
                  {"xi": "moving coordinate x + c t", "phi": "wave profile",
                   "dphi": "derivative of the profile (spline)"})


def _crossing(xi: Array, phi: Array, level: float) -> float:
    k = int(np.searchsorted(phi, level))
    if k == 0 or k >= phi.size:
        raise ProfileError(f"profile does not cross level {level}")
    x0, x1, p0, p1 = xi[k - 1], xi[k], phi[k - 1], phi[k]
    return float(x0 + (level - p0) * (x1 - x0) / (p1 - p0))


# --------------------------------------------------------------------------
# relaxation and polishing


@dataclass(frozen=True)
class ProfileGrid:
    xi_min: float
    xi_max: float
    m: int = 10

    def __post_init__(self):
        if not (self.xi_min < 0 < self.xi_max):
            raise ProfileError("profile grid must contain xi = 0")
        for v in (self.xi_min, self.xi_max):
            if abs(v * self.m - round(v * self.m)) > 1e-9:
                raise ProfileError(f"grid end {v} is not a multiple of 1/m")

    @property
    def xi(self) -> Array:
        n = int(round((self.xi_max - self.xi_min) * self.m)) + 1
        return self.xi_min + np.arange(n) / self.m


def tail_rates(problem: Problem, c: float) -> tuple[float | None, float]:
    """Left tail rate (lam1(c), lam* at c*, None below c*) and upsilon(c)."""
    ups = find_upsilon(problem, c)
    try:
        lam1, _ = find_lambda_roots(problem, c)
    except BelowMinimalSpeedError:
        lam1 = None
    return lam1, ups


def default_grid(problem: Problem, c: float, m: int = 10, decades: float = 10.0,
                 margin: float = 10.0) -> ProfileGrid:
    """Window wide enough for ``decades`` decades of decay on each side."""
    lam, ups = tail_rates(problem, c)
    if lam is None:
        lam = find_cstar(problem).lam_star
    L = math.ceil(decades * math.log(10) / lam + margin)
    R = math.ceil(decades * math.log(10) / ups + margin)
    return ProfileGrid(-float(L), float(R), m)


def _relax(op: ProfileOperator, phi: Array, dt: float, T: float, tol: float,
           shape, check_every: float = 1.0) -> tuple[Array, dict]:
    """RK4 in pseudo-time; convergence is judged on the recentred shape."""
    steps_per_check = max(1, int(round(check_every / dt)))
    n_checks = int(math.ceil(T / (steps_per_check * dt)))
    prev = shape(phi)
    change = math.inf
    t = 0.0
    track = []
    for j in range(n_checks):
        for _ in range(steps_per_check):
            k1 = op.residual(phi)
            k2 = op.residual(phi + 0.5 * dt * k1)
            k3 = op.residual(phi + 0.5 * dt * k2)
            k4 = op.residual(phi + dt * k3)
            phi = phi + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        t += steps_per_check * dt
        if not np.all(np.isfinite(phi)):
            raise NotConvergedError(f"relaxation produced non-finite values at t={t:.3g}")
        try:
            track.append((t, _crossing(op.xi, np.maximum.accumulate(phi), op.problem.K / 2)))
            cur = shape(phi)
        except ProfileError:
            raise NotConvergedError(f"relaxation lost the front at t={t:.3g}",
                                    {"relax_time": t}) from None
        change = float(np.max(np.abs(cur - prev))) / (steps_per_check * dt)
        prev = cur
        if change < tol:
            break
    drift = float("nan")
    if len(track) >= 2:
        (ta, xa), (tb, xb) = track[max(0, len(track) - 11)], track[-1]
        drift = (xb - xa) / (tb - ta)
    return phi, {"relax_time": t, "relax_change": change, "relax_drift": drift}


def recenter(xi: Array, phi: Array, K: float, lam: float, ups: float) -> Array:
    """Resample so that phi(0) = K/2, using tail laws outside the window."""
    x0 = _crossing(xi, np.maximum.accumulate(phi), K / 2)
    tmp = WaveProfile(0.0, xi, phi, K, lam, ups, 1)
    return tmp(xi + x0)


def _gauss_newton(op: ProfileOperator, phi: Array, pin: int, K: float, tol: float = 1e-13,
                  max_iter: int = 40) -> tuple[Array, dict]:
    """Minimize |R(phi)|^2 + (phi_pin - K/2)^2 by damped Gauss-Newton."""
    wpin = 1.0

    def merit(p):
        r = op.residual(p)
        return float(r @ r + (wpin * (p[pin] - K / 2)) ** 2), r

    f0, r = merit(phi)
    it = 0
    e = sp.csr_matrix(([wpin], ([0], [pin])), shape=(1, phi.size))
    for it in range(1, max_iter + 1):
        J = op.jacobian(phi)
        Ja = sp.vstack([J, e]).tocsr()
        ra = np.concatenate([r, [wpin * (phi[pin] - K / 2)]])
        step = spsolve((Ja.T @ Ja).tocsc(), -(Ja.T @ ra))
        alpha = 1.0
        while True:
            trial = phi + alpha * step
            f1, r1 = merit(trial)
            if f1 <= f0 * (1 - 1e-4 * alpha) or alpha < 1e-6 or f0 < 1e-28:
                break
            alpha *= 0.5
        phi, f0, r = trial, f1, r1
        if np.max(np.abs(alpha * step)) < tol * max(1.0, K):
            break
    return phi, {"newton_iterations": it, "newton_merit": f0}


def relax_profile(problem: Problem, c: float, grid: ProfileGrid | None = None,
                  dt: float | None = None, T_relax: float = 400.0, tol: float = 1e-10,
                  polish: bool = True, m: int = 10, seed_shift: float = 0.0,
                  polish_after: float = 1e-5, max_drift: float = 0.05) -> WaveProfile:
    """Front profile at speed c.

    Relaxation runs until the sup change per unit time of the recentred shape
    drops below ``tol`` (or below ``polish_after`` when ``polish`` is on, after
    which Gauss-Newton takes over).  Upwinding perturbs the discrete dispersion
    relation, so the unpolished front drifts slowly in the moving frame; a drift
    above ``max_drift * c`` counts as failure.  Below c* no front exists and the relaxation cannot settle; this is
    reported as :class:`NotConvergedError`.
    """
    K = problem.K
    lam, ups = tail_rates(problem, c)
    cs = find_cstar(problem)
    below = lam is None
    if grid is None:
        grid = default_grid(problem, c if not below else cs.c_star, m)
    m = grid.m
    xi = grid.xi
    h = 1.0 / m
    seed_rate = lam if not below else cs.lam_star
    ghosts = "dirichlet" if below else "tails"
    op_up = ProfileOperator(problem, c, xi, m, lam, ups, derivative="upwind", ghosts=ghosts)
    z = xi - seed_shift
    phi = K / (1.0 + np.exp(-seed_rate * z))
    if dt is None:
        L = problem.model.lipschitz_bound()
        dt = min(0.2 / (4 * problem.d + L), 0.5 * h / max(abs(c), 1e-12))
    rl, ru = (seed_rate, ups)
    shape = lambda p: recenter(xi, p, K, rl, ru)
    want = polish_after if polish else tol
    phi, info = _relax(op_up, phi, dt, T_relax, want, shape)
    info["relax_dt"] = dt
    drift_rel = abs(info["relax_drift"]) / max(abs(c), 1e-12)
    if below or info["relax_change"] >= want or not drift_rel < max_drift:
        raise NotConvergedError(
            f"relaxation at c={c:.6g} did not settle within T={T_relax} (shape change per unit "
            f"time {info['relax_change']:.3g}, front drift {info['relax_drift']:.3g})"
            + (f"; c is below c*={cs.c_star:.6g} where no front exists" if below else ""),
            info)
    phi = recenter(xi, phi, K, lam, ups)
    if polish:
        op = ProfileOperator(problem, c, xi, m, lam, ups, derivative="central4", ghosts="tails")
        pin = int(np.argmin(np.abs(xi)))
        phi, ninfo = _gauss_newton(op, phi, pin, K)
        info.update(ninfo)
    prof = WaveProfile(c, xi, phi, K, lam, ups, m, info=info)
    info["polished"] = polish
    sup, l2 = profile_residual(problem, prof)
    prof.residual_sup, prof.residual_L2 = sup, l2
    if np.any(phi <= 0) or np.any(phi >= K):
        raise ProfileError("profile left (0, K) on interior nodes")
    viol = float(np.min(np.diff(phi)))
    info["min_forward_difference"] = viol
    if viol < -1e-12 * K:
        raise ProfileError(f"profile lost monotonicity: min forward difference {viol:.3g}")
    try:
        s = tail_slopes(prof, problem)
        prof.left_slope, prof.right_slope = s.left_slope, s.right_slope
    except TailResolutionError:
        pass
    return prof


def profile_residual(problem: Problem, profile: WaveProfile,
                     extension: str = "tails") -> tuple[float, float]:
    """(sup, L2) of the profile-equation residual with a fourth-order derivative.

    ``extension`` is 'tails' (exponential tail laws beyond the window) or
    'constant' (edge values continued flat).
    """
    ghosts = {"tails": "tails", "constant": "constant"}.get(extension)
    if ghosts is None:
        raise ProfileError(f"unknown extension '{extension}'")
    op = ProfileOperator(problem, profile.c, profile.xi, profile.m, profile.lam_left,
                         profile.upsilon, derivative="central4", ghosts=ghosts)
    r = op.residual(profile.phi)
    return float(np.max(np.abs(r))), float(math.sqrt(profile.h * float(r @ r)))


# --------------------------------------------------------------------------
# tails


@dataclass(frozen=True)
class TailSlopes:
    left_slope: float
    right_slope: float
    lam_pred: float
    upsilon_pred: float
    left_slope_prefactor: float
    left_rss_plain: float
    left_rss_prefactor: float

    @property
    def prefactor_wins(self) -> bool:
        return self.left_rss_prefactor < self.left_rss_plain


def _linfit(x: Array, y: Array) -> tuple[float, float]:
    A = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rss = float(np.sum((A @ coef - y) ** 2))
    return float(coef[0]), rss


def tail_slopes(profile: WaveProfile, problem: Problem, lo: float = 1e-8,
                hi: float = 1e-4) -> TailSlopes:
    """Fitted exponential rates of both tails over the window [lo K, hi K]."""
    K, xi, phi = profile.K, profile.xi, profile.phi
    left = (phi >= lo * K) & (phi <= hi * K)
    right = (K - phi >= lo * K) & (K - phi <= hi * K)
    if left.sum() < 10 or right.sum() < 10:
        raise TailResolutionError(
            f"tails not resolved over [{lo:g}, {hi:g}] K ({int(left.sum())} left, "
            f"{int(right.sum())} right samples)")
    if phi[0] > lo * K or K - phi[-1] > lo * K:
        raise TailResolutionError("profile window does not reach the lower end of the fit range")
    sl, rss1 = _linfit(xi[left], np.log(phi[left]))
    xl = xi[left]
    if np.all(xl < 0):
        slp, rss2 = _linfit(xl, np.log(phi[left]) - np.log(-xl))
    else:
        slp, rss2 = float("nan"), float("inf")
    sr, _ = _linfit(xi[right], -np.log(K - phi[right]))
    lam_pred, _ = find_lambda_roots(problem, profile.c)
    return TailSlopes(sl, sr, lam_pred, find_upsilon(problem, profile.c), slp, rss1, rss2)


def measure_speed(problem: Problem, profile: WaveProfile, T: float = 20.0,
                  x_margin: float = 10.0) -> float:
    """Speed of the K/2 level set in a lab-frame simulation started from the profile."""
    from .lattice import Grid, integrate, translating_history, Observer

    c = profile.c
    x_min = math.floor(profile.xi[0] - c * T - x_margin)
    x_max = math.ceil(profile.xi[-1])
    grid = Grid(float(x_min), float(x_max), profile.m)
    pos = []

    def record(t, u):
        pos.append((t, _crossing(grid.x, np.maximum.accumulate(u), problem.K / 2)))

    integrate(problem, grid, None, T, translating_history(profile, c),
              [Observer(every=10 ** 9, callback=record)])
    t = np.array([p[0] for p in pos])
    x = np.array([p[1] for p in pos])
    keep = t >= 0.25 * T
    slope = np.polyfit(t[keep], x[keep], 1)[0]
    return float(-slope)
