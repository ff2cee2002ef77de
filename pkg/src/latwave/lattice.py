"""Method-of-lines integrator for the delayed nonlocal lattice equation

    u_t(x, t) = d (u(x+1) - 2u(x) + u(x-1)) + f(u(x, t), (h*u)(x, t - tau))

on a truncated grid of spacing 1/m.  Nodes within one unit of the left edge are
held at 0 and those within one unit of the right edge at K; the shifts and the
convolution both read 0 / K outside the domain.  Time stepping is classical RK4.
The history buffer stores the convolved field (h*u), so the delayed term at a
stage time is a linear interpolation between stored steps.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import _backend
from .dispersion import Problem
from .kernels import DiscreteKernel
from .models import KIND_GENERIC
from .output import write_csv, write_json

Array = np.ndarray


class LatticeError(ValueError):
    pass


class StepSizeError(LatticeError):
    pass


class NumericalError(ArithmeticError):
    def __init__(self, msg: str, node: int | None = None, t: float | None = None):
        super().__init__(msg)
        self.node, self.t = node, t


@dataclass(frozen=True)
class Grid:
    x_min: float
    x_max: float
    m: int = 10

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 1:
            raise LatticeError(f"m must be a positive integer (got {self.m})")
        width = self.x_max - self.x_min
        if width < 2:
            raise LatticeError(f"grid needs x_max - x_min >= 2 (got {width})")
        cells = width * self.m
        if abs(cells - round(cells)) > 1e-9 * max(1.0, cells):
            raise LatticeError(f"(x_max - x_min) * m = {cells} is not an integer")

    @property
    def n_nodes(self) -> int:
        return int(round((self.x_max - self.x_min) * self.m)) + 1

    @property
    def spacing(self) -> float:
        return 1.0 / self.m

    @property
    def stride(self) -> int:
        return int(self.m)

    @property
    def x(self) -> Array:
        return self.x_min + np.arange(self.n_nodes) / self.m

    @property
    def lo(self) -> int:
        """First free (unclamped) node."""
        return self.stride

    @property
    def hi(self) -> int:
        """Last free node."""
        return self.n_nodes - 1 - self.stride

    def index_of(self, x: float) -> int:
        return int(round((x - self.x_min) * self.m))

    def describe(self) -> dict:
        return {"x_min": self.x_min, "x_max": self.x_max, "m": self.m,
                "n_nodes": self.n_nodes}


def dt_max(problem: Problem) -> float:
    """Largest admissible step: explicit stability and delay resolution."""
    L = problem.model.lipschitz_bound()
    bound = 0.2 / (4.0 * problem.d + L)
    if problem.tau > 0:
        bound = min(bound, problem.tau / 4.0)
    return bound


def auto_dt(problem: Problem) -> float:
    """dt_max, shrunk so that tau is an integer number of steps."""
    dt = dt_max(problem)
    if problem.tau > 0:
        dt = problem.tau / math.ceil(problem.tau / dt - 1e-12)
    return dt


# "equilibria": nodes within one unit of the edges are held at 0 (left) and K
# (right).  "hold": they keep their initial values and the outside reads the
# initial edge values, which makes any constant field an exact fixed point.
BOUNDARIES = ("equilibria", "hold")


class HistoryBuffer:
    """Ring of past convolved fields at step times, linear in between.

    Holds enough entries to look up any time in [t - tau - dt, t].
    """

    def __init__(self, tau: float, dt: float, n: int):
        self.tau, self.dt = float(tau), float(dt)
        self.cap = int(math.ceil(tau / dt - 1e-9)) + 3
        self.data = np.zeros((self.cap, n))
        self.t0: float | None = None  # time of entry 0
        self.count = 0

    def push(self, t: float, field_: Array) -> None:
        if self.t0 is None:
            self.t0 = t
        expect = self.t0 + self.count * self.dt
        if abs(t - expect) > 1e-9 * max(1.0, abs(t)):
            raise LatticeError(f"history push at t={t}, expected {expect}")
        self.data[self.count % self.cap] = field_
        self.count += 1

    @property
    def t_first(self) -> float:
        return self.t0 + max(0, self.count - self.cap) * self.dt

    @property
    def t_last(self) -> float:
        return self.t0 + (self.count - 1) * self.dt

    def lookup(self, t: float, out: Array | None = None) -> Array:
        s = (t - self.t0) / self.dt
        k = int(math.floor(s + 1e-9))
        theta = s - k
        if abs(theta) < 1e-9:
            theta = 0.0
        first = max(0, self.count - self.cap)
        if k < first or k > self.count - 1 or (k == self.count - 1 and theta > 0):
            raise LatticeError(
                f"history lookup at t={t} outside stored window [{self.t_first}, {self.t_last}]")
        a = self.data[k % self.cap]
        if out is None:
            out = np.empty_like(a)
        if theta == 0.0:
            out[:] = a
        else:
            b = self.data[(k + 1) % self.cap]
            np.multiply(a, 1.0 - theta, out=out)
            out += theta * b
        return out


InitialData = Array | Callable[[Array, float], Array]


def _sample_initial(initial: InitialData, x: Array, s: float) -> Array:
    if callable(initial):
        u = np.asarray(initial(x, s), dtype=float)
    else:
        u = np.asarray(initial, dtype=float)
    if u.shape != x.shape:
        raise LatticeError(f"initial data has shape {u.shape}, grid has {x.shape}")
    return np.array(u, dtype=float, copy=True)


class LatticeStepper:
    """RK4 stepper holding the state, the clock and the delay history."""

    def __init__(self, problem: Problem, grid: Grid, dt: float, initial: InitialData,
                 t0: float = 0.0, backend: str | None = None, tail_tol: float = 1e-10,
                 check_dt: bool = True, boundary: str = "equilibria"):
        if boundary not in BOUNDARIES:
            raise LatticeError(f"unknown boundary '{boundary}' (expected {', '.join(BOUNDARIES)})")
        if not dt > 0:
            raise StepSizeError(f"dt must be positive (got {dt})")
        if check_dt:
            lim = dt_max(problem)
            if dt > lim * (1 + 1e-9):
                raise StepSizeError(f"dt={dt:.6g} exceeds dt_max={lim:.6g}")
        self.problem, self.grid, self.dt = problem, grid, float(dt)
        self.kern = _backend.get(backend)
        self.K = problem.K
        self.lo, self.hi, self.stride = grid.lo, grid.hi, grid.stride
        self.x = grid.x
        n = grid.n_nodes
        model = problem.model
        self.kind = model.kind
        self.params = np.asarray(model.kernel_params or (0.0,), dtype=float)
        dk: DiscreteKernel = problem.kernel.discretize(grid.spacing, tail_tol)
        self.dkernel = dk
        self.offsets = np.ascontiguousarray(dk.offsets, dtype=np.int64)
        self.weights = np.ascontiguousarray(dk.weights, dtype=float)
        self.is_dirac = dk.offsets.size == 1 and dk.offsets[0] == 0
        self.tau = problem.tau
        self._buf = [np.empty(n) for _ in range(6)]
        self.t0 = self.t = float(t0)
        self.steps = 0

        self.boundary = boundary
        self._edge_left = self._edge_right = None
        self.left_value, self.right_value = 0.0, self.K
        if boundary == "hold":
            raw = _sample_initial(initial, self.x, 0.0)
            self._edge_left = raw[: self.lo].copy()
            self._edge_right = raw[self.hi + 1:].copy()
            self.left_value, self.right_value = float(raw[0]), float(raw[-1])
        u0 = self._clamp(_sample_initial(initial, self.x, 0.0))
        self.u = u0
        self.history: HistoryBuffer | None = None
        if self.tau > 0:
            self.history = HistoryBuffer(self.tau, self.dt, n)
            k = int(math.ceil(self.tau / self.dt - 1e-9))
            start = self.t - k * self.dt
            for j in range(k + 1):
                s = start + j * self.dt
                us = u0 if j == k else self._clamp(_sample_initial(initial, self.x, s - self.t))
                self.history.push(s, self.convolve(us))

    def _clamp(self, u: Array) -> Array:
        if self._edge_left is None:
            u[: self.lo] = 0.0
            u[self.hi + 1:] = self.K
        else:
            u[: self.lo] = self._edge_left
            u[self.hi + 1:] = self._edge_right
        return u

    def convolve(self, u: Array, out: Array | None = None) -> Array:
        if out is None:
            out = np.empty_like(u)
        if self.is_dirac:
            out[:] = u
            return out
        self.kern.sym_convolve(u, self.offsets, self.weights, self.left_value, self.right_value, out)
        return out

    def rhs(self, u: Array, conv: Array, out: Array) -> Array:
        if self.kind == KIND_GENERIC:
            self.kern.laplacian(u, out, self.problem.d, self.stride, self.lo, self.hi)
            sl = slice(self.lo, self.hi + 1)
            out[sl] += self.problem.model.f(u[sl], conv[sl])
            return out
        return self.kern.lattice_rhs(u, conv, out, self.problem.d, self.stride,
                                     self.lo, self.hi, self.kind, self.params)

    def _delayed(self, u_stage: Array, t_stage: float, out: Array) -> Array:
        if self.history is None:
            return self.convolve(u_stage, out)
        return self.history.lookup(t_stage - self.tau, out)

    def step(self) -> Array:
        dt, t, u = self.dt, self.t, self.u
        k1, k2, k3, k4, tmp, v = self._buf
        self.rhs(u, self._delayed(u, t, v), k1)
        np.multiply(k1, 0.5 * dt, out=tmp)
        tmp += u
        self.rhs(tmp, self._delayed(tmp, t + 0.5 * dt, v), k2)
        np.multiply(k2, 0.5 * dt, out=tmp)
        tmp += u
        self.rhs(tmp, self._delayed(tmp, t + 0.5 * dt, v), k3)
        np.multiply(k3, dt, out=tmp)
        tmp += u
        self.rhs(tmp, self._delayed(tmp, t + dt, v), k4)
        k2 += k3
        k2 *= 2.0
        k1 += k2
        k1 += k4
        new = u + (dt / 6.0) * k1
        self._clamp(new)
        self.steps += 1
        self.t = self.t0 + self.steps * dt
        if not np.all(np.isfinite(new)):
            bad = int(np.flatnonzero(~np.isfinite(new))[0])
            raise NumericalError(
                f"non-finite value at node {bad} (x={self.x[bad]:.6g}) at t={self.t:.6g}",
                node=bad, t=self.t)
        self.u = new
        if self.history is not None:
            self.history.push(self.t, self.convolve(new))
        return new


# --------------------------------------------------------------------------
# observers and runs


def weighted_norms(v: Array, w: Array | None, h: float, mask: Array | None = None) -> tuple[float, float, float, float]:
    """(sup|v|, L1_w, L2_w, L2) with trapezoid sums at spacing h."""
    if mask is not None:
        v = v[mask]
        w = None if w is None else w[mask]
    if v.size == 0:
        return 0.0, 0.0, 0.0, 0.0
    a = np.abs(v)
    ww = np.ones_like(a) if w is None else w

    def trap(g):
        return h * (g.sum() - 0.5 * (g[0] + g[-1])) if g.size > 1 else 0.0

    return (float(a.max()), float(trap(ww * a)), math.sqrt(trap(ww * a * a)),
            math.sqrt(trap(a * a)))


@dataclass
class Observer:
    """Records norms of u - reference(t) every ``every`` steps.

    ``weight(t)`` and ``window(t)`` return a weight array and a boolean mask on
    the grid; ``snapshot_every`` (in steps) also stores u.
    """

    reference: Callable[[float], Array] | None = None
    weight: Callable[[float], Array] | None = None
    window: Callable[[float], Array] | None = None
    every: int = 1
    snapshot_every: int | None = None
    callback: Callable[[float, Array], None] | None = None
    name: str = "norms"
    times: list = field(default_factory=list)
    rows: list = field(default_factory=list)
    snap_times: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)

    def observe(self, step: int, t: float, u: Array, h: float) -> None:
        if self.callback is not None:
            self.callback(t, u)
        if step % self.every == 0:
            v = u if self.reference is None else u - self.reference(t)
            w = None if self.weight is None else self.weight(t)
            mask = None if self.window is None else self.window(t)
            self.times.append(t)
            self.rows.append(weighted_norms(v, w, h, mask))
        if self.snapshot_every and step % self.snapshot_every == 0:
            self.snap_times.append(t)
            self.snapshots.append(u.copy())

    def series(self) -> dict[str, Array]:
        r = np.array(self.rows).reshape(-1, 4)
        return {"t": np.array(self.times), "sup": r[:, 0], "L1w": r[:, 1],
                "L2w": r[:, 2], "L2": r[:, 3]}


NORM_NOTES = {
    "t": "time",
    "sup": "max over nodes of |u - reference|",
    "L1w": "weighted L1 norm of u - reference, trapezoid",
    "L2w": "weighted L2 norm of u - reference, trapezoid",
    "L2": "unweighted L2 norm of u - reference, trapezoid",
}


@dataclass
class LatticeRun:
    problem: Problem
    grid: Grid
    dt: float
    T: float
    u: Array
    observers: list[Observer]
    steps: int
    backend: str
    min_value: float
    max_value: float
    boundary: str = "clamp_left_0_right_K"

    @property
    def norms(self) -> dict[str, Array]:
        return self.observers[0].series() if self.observers else {}

    def metadata(self) -> dict:
        return {"grid": self.grid.describe(), "dt": self.dt, "T": self.T,
                "steps": self.steps, "boundary": self.boundary, "backend": self.backend,
                "problem": self.problem.describe(),
                "range": [self.min_value, self.max_value]}

    def write_norms_csv(self, path, observer: int = 0) -> None:
        s = self.observers[observer].series()
        cols = ["t", "sup", "L1w", "L2w", "L2"]
        write_csv(path, cols, zip(*(s[c] for c in cols)), NORM_NOTES)

    def write_snapshots_csv(self, path, observer: int = 0) -> None:
        ob = self.observers[observer]
        x = self.grid.x
        rows = ((t, xi, ui) for t, u in zip(ob.snap_times, ob.snapshots) for xi, ui in zip(x, u))
        write_csv(path, ["t", "x", "u"], rows,
                  {"t": "time", "x": "lattice position", "u": "solution value"})

    def write_metadata(self, path) -> None:
        write_json(path, self.metadata())


def integrate(problem: Problem, grid: Grid, dt: float | None, T: float,
              initial: InitialData, observers: Sequence[Observer] = (),
              backend: str | None = None, tail_tol: float = 1e-10,
              boundary: str = "equilibria") -> LatticeRun:
    """Integrate to time T; observers see the state after every step (and at t=0)."""
    if dt is None:
        dt = auto_dt(problem)
    if not T >= 0:
        raise LatticeError(f"horizon T must be nonnegative (got {T})")
    st = LatticeStepper(problem, grid, dt, initial, backend=backend, tail_tol=tail_tol,
                        boundary=boundary)
    obs = list(observers)
    h = grid.spacing
    lo_v, hi_v = float(st.u.min()), float(st.u.max())
    for ob in obs:
        ob.observe(0, st.t, st.u, h)
    n_steps = int(math.ceil(T / dt - 1e-9))
    for _ in range(n_steps):
        u = st.step()
        lo_v = min(lo_v, float(u.min()))
        hi_v = max(hi_v, float(u.max()))
        for ob in obs:
            ob.observe(st.steps, st.t, u, h)
    return LatticeRun(problem, grid, dt, T, st.u, obs, st.steps, st.kern.NAME, lo_v, hi_v,
                      boundary="clamp_left_0_right_K" if boundary == "equilibria" else "hold_initial")


def check_comparison(problem: Problem, grid: Grid, dt: float | None, T: float,
                     lower: InitialData, upper: InitialData, backend: str | None = None,
                     boundary: str = "equilibria") -> float:
    """Integrate ordered data in lockstep; return max over time and nodes of lower - upper."""
    if dt is None:
        dt = auto_dt(problem)
    a = LatticeStepper(problem, grid, dt, lower, backend=backend, boundary=boundary)
    b = LatticeStepper(problem, grid, dt, upper, backend=backend, boundary=boundary)
    k = int(math.ceil(problem.tau / dt - 1e-9)) if problem.tau > 0 else 0
    for j in range(k + 1):
        s = -j * dt
        lo = a._clamp(_sample_initial(lower, grid.x, s))
        up = b._clamp(_sample_initial(upper, grid.x, s))
        if np.max(lo - up) > 1e-12 * max(1.0, problem.K):
            raise LatticeError(f"initial data are not ordered at s={s:.6g}")
    worst = float(np.max(a.u - b.u))
    for _ in range(int(math.ceil(T / dt - 1e-9))):
        worst = max(worst, float(np.max(a.step() - b.step())))
    return worst


def translating_history(profile: Callable[[Array], Array], c: float,
                        perturbation: Array | None = None, K: float | None = None) -> Callable[[Array, float], Array]:
    """History u(x, s) = phi(x + c s) (+ p(x), clipped to [0, K])."""
    def init(x: Array, s: float) -> Array:
        u = np.asarray(profile(x + c * s), dtype=float)
        if perturbation is not None:
            u = u + perturbation
            if K is not None:
                u = np.clip(u, 0.0, K)
        return u
    return init
