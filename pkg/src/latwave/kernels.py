"""Nonlocal spatial kernels h and their two-sided exponential moment G.

G(lam) = int h(y) exp(-lam y) dy, finite for |Re lam| < lambda0.  All kernels
are even, nonnegative and of unit mass; the discretized weights used by the
lattice integrator are renormalized to sum exactly to one.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.special import erfc

Number = float | complex


class KernelError(ValueError):
    pass


class AbscissaError(KernelError):
    """Exponential moment requested outside (-lambda0, lambda0)."""


@dataclass(frozen=True)
class DiscreteKernel:
    """Quadrature weights on integer node offsets (spacing ``spacing``).

    ``offsets`` are node counts, so the physical offset is offsets * spacing.
    (h*u)(x_i) is approximated by sum_j weights[j] * u[i - offsets[j]].
    """

    offsets: np.ndarray
    weights: np.ndarray
    spacing: float
    discarded_mass: float = 0.0

    @property
    def radius(self) -> int:
        return int(np.max(np.abs(self.offsets))) if self.offsets.size else 0

    def moment(self, lam: Number) -> Number:
        y = self.offsets * self.spacing
        return np.sum(self.weights * np.exp(-lam * y))

    def dense(self) -> np.ndarray:
        """Weights on the contiguous offset range -radius..radius."""
        r = self.radius
        out = np.zeros(2 * r + 1)
        np.add.at(out, self.offsets + r, self.weights)
        return out


class Kernel:
    variant: str = ""
    lambda0: float = math.inf

    def _check(self, lam: Number) -> None:
        if not abs(np.real(lam)) < self.lambda0:
            raise AbscissaError(
                f"|Re lambda| = {abs(np.real(lam)):.6g} outside the exponential-moment "
                f"abscissa lambda0 = {self.lambda0:.6g} of the {self.variant} kernel")

    def G(self, lam: Number) -> Number:
        self._check(lam)
        return self._G(lam)

    def G_derivs(self, lam: float) -> tuple[float, float]:
        self._check(lam)
        return self._G_derivs(lam)

    def _G(self, lam):  # pragma: no cover - abstract
        raise NotImplementedError

    def _G_derivs(self, lam):  # pragma: no cover - abstract
        raise NotImplementedError

    def discretize(self, spacing: float, tail_tol: float = 1e-10) -> DiscreteKernel:
        raise NotImplementedError  # pragma: no cover

    def mass(self) -> float:
        return float(np.real(self._G(0.0)))

    def describe(self) -> dict:
        return {"type": self.variant}


class DiracKernel(Kernel):
    variant = "dirac"

    def _G(self, lam):
        return 1.0 + 0.0 * lam

    def _G_derivs(self, lam):
        return 0.0, 0.0

    def discretize(self, spacing: float, tail_tol: float = 1e-10) -> DiscreteKernel:
        _check_discretize_args(spacing, tail_tol)
        return DiscreteKernel(np.array([0]), np.array([1.0]), spacing)


class LatticeSumKernel(Kernel):
    """h(x) = sum_j J(j) delta(x - j), point masses at integer offsets."""

    variant = "lattice_sum"

    def __init__(self, weights: Mapping[int, float]):
        J = {int(j): float(w) for j, w in weights.items() if float(w) != 0.0}
        if not J:
            raise KernelError("lattice_sum kernel needs at least one nonzero weight")
        for j, w in J.items():
            if w < 0:
                raise KernelError(f"lattice_sum weight J({j}) = {w} is negative")
            if abs(J.get(-j, 0.0) - w) > 1e-12:
                raise KernelError(f"lattice_sum kernel is not even: J({j}) != J({-j})")
        total = sum(J.values())
        if abs(total - 1.0) > 1e-10:
            raise KernelError(f"lattice_sum weights sum to {total}, expected 1")
        self.J = dict(sorted(J.items()))
        self._j = np.array(list(self.J), dtype=float)
        self._w = np.array(list(self.J.values()))

    def _G(self, lam):
        return np.sum(self._w * np.exp(-lam * self._j))

    def _G_derivs(self, lam):
        e = self._w * np.exp(-lam * self._j)
        return float(np.sum(-self._j * e)), float(np.sum(self._j ** 2 * e))

    def discretize(self, spacing: float, tail_tol: float = 1e-10) -> DiscreteKernel:
        _check_discretize_args(spacing, tail_tol)
        nodes = self._j / spacing
        k = np.rint(nodes)
        if np.max(np.abs(nodes - k)) > 1e-9:
            raise KernelError(
                f"lattice_sum offsets {sorted(self.J)} do not land on nodes of spacing {spacing}")
        return DiscreteKernel(k.astype(int), self._w.copy(), spacing)

    def describe(self) -> dict:
        return {"type": self.variant, "weights": {str(j): w for j, w in self.J.items()}}


class GaussianKernel(Kernel):
    """h(y) = (4 pi alpha)^(-1/2) exp(-y^2 / (4 alpha)), so G(lam) = exp(alpha lam^2)."""

    variant = "gaussian"

    def __init__(self, alpha: float):
        if not alpha > 0:
            raise KernelError(f"gaussian kernel needs alpha > 0 (got {alpha})")
        self.alpha = float(alpha)

    @property
    def sigma(self) -> float:
        return math.sqrt(2.0 * self.alpha)

    def density(self, y):
        return np.exp(-np.asarray(y) ** 2 / (4 * self.alpha)) / math.sqrt(4 * math.pi * self.alpha)

    def _G(self, lam):
        return np.exp(self.alpha * lam * lam)

    def _G_derivs(self, lam):
        g = math.exp(self.alpha * lam * lam)
        return 2 * self.alpha * lam * g, (2 * self.alpha + 4 * self.alpha ** 2 * lam * lam) * g

    def tail_radius(self, tail_tol: float) -> float:
        """Smallest r with mass outside [-r, r] below ``tail_tol``."""
        scale = 2.0 * math.sqrt(self.alpha)
        lo, hi = 0.0, 1.0
        while erfc(hi) >= tail_tol:
            hi *= 2
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if erfc(mid) >= tail_tol else (lo, mid)
        return hi * scale

    def discretize(self, spacing: float, tail_tol: float = 1e-10) -> DiscreteKernel:
        _check_discretize_args(spacing, tail_tol)
        r = self.tail_radius(tail_tol)
        n = int(math.ceil(r / spacing))
        k = np.arange(-n, n + 1)
        w = self.density(k * spacing) * spacing
        discarded = float(erfc(n * spacing / (2 * math.sqrt(self.alpha))))
        return DiscreteKernel(k, w / w.sum(), spacing, discarded)

    def describe(self) -> dict:
        return {"type": self.variant, "alpha": self.alpha}


class TabulatedKernel(Kernel):
    """Even kernel sampled on a uniform symmetric grid y in [-R, R].

    Samples are normalized to unit trapezoid mass unless ``normalize`` is off,
    in which case the mass must already be one to 1e-10.
    """

    variant = "tabulated"

    def __init__(self, y: Sequence[float], h: Sequence[float], normalize: bool = True,
                 lambda0: float = math.inf):
        y = np.asarray(y, dtype=float)
        h = np.asarray(h, dtype=float)
        if y.ndim != 1 or y.shape != h.shape or y.size < 3:
            raise KernelError("tabulated kernel needs matching 1-D arrays with >= 3 samples")
        dy = np.diff(y)
        if np.any(dy <= 0) or np.ptp(dy) > 1e-9 * dy.mean():
            raise KernelError("tabulated kernel samples must be on a uniform increasing grid")
        if abs(y[0] + y[-1]) > 1e-12 * max(1.0, abs(y[-1])):
            raise KernelError("tabulated kernel grid must be symmetric about 0")
        if np.any(h < 0):
            raise KernelError("tabulated kernel has negative samples")
        if np.max(np.abs(h - h[::-1])) > 1e-12 * max(1.0, h.max()):
            raise KernelError("tabulated kernel samples are not even")
        h = 0.5 * (h + h[::-1])
        mass = np.trapezoid(h, y)
        if normalize:
            h = h / mass
        elif abs(mass - 1.0) > 1e-10:
            raise KernelError(f"tabulated kernel mass is {mass}, expected 1")
        self.y, self.h = y, h
        self.R = float(y[-1])
        self.lambda0 = float(lambda0)

    @classmethod
    def from_csv(cls, path: str | Path, **kwargs) -> "TabulatedKernel":
        ys, hs = [], []
        with open(path, newline="") as fh:
            for row in csv.reader(fh):
                if not row or row[0].lstrip().startswith("#"):
                    continue
                try:
                    ys.append(float(row[0]))
                    hs.append(float(row[1]))
                except ValueError:
                    continue  # header line
        return cls(ys, hs, **kwargs)

    def _G(self, lam):
        return np.trapezoid(self.h * np.exp(-lam * self.y), self.y)

    def _G_derivs(self, lam):
        e = self.h * np.exp(-lam * self.y)
        return (float(np.trapezoid(-self.y * e, self.y)),
                float(np.trapezoid(self.y ** 2 * e, self.y)))

    def G_error_estimate(self, lam: float) -> float:
        """Richardson-style error estimate: full grid vs every-other-sample trapezoid."""
        full = self._G(lam)
        if (self.y.size - 1) % 2:
            return abs(full) * 1e-8
        half = np.trapezoid(self.h[::2] * np.exp(-lam * self.y[::2]), self.y[::2])
        return abs(full - half) / 3.0

    def discretize(self, spacing: float, tail_tol: float = 1e-10) -> DiscreteKernel:
        _check_discretize_args(spacing, tail_tol)
        n = int(math.floor(self.R / spacing + 1e-9))
        k = np.arange(-n, n + 1)
        vals = np.interp(k * spacing, self.y, self.h, left=0.0, right=0.0)
        if vals.sum() <= 0:
            raise KernelError(f"spacing {spacing} does not resolve the tabulated kernel")
        vals = 0.5 * (vals + vals[::-1])
        return DiscreteKernel(k, vals / vals.sum(), spacing)

    def describe(self) -> dict:
        return {"type": self.variant, "R": self.R, "samples": int(self.y.size)}


def _check_discretize_args(spacing: float, tail_tol: float) -> None:
    if not spacing > 0:
        raise KernelError(f"grid spacing must be positive (got {spacing})")
    if not 0 < tail_tol <= 1e-2:
        raise KernelError(f"tail_tol must lie in (0, 1e-2] (got {tail_tol})")


def eval_G(kernel: Kernel, lam: Number) -> Number:
    return kernel.G(lam)


def eval_G_derivs(kernel: Kernel, lam: float) -> tuple[float, float]:
    return kernel.G_derivs(lam)


def discretize_kernel(kernel: Kernel, grid_spacing: float, tail_tol: float = 1e-10) -> DiscreteKernel:
    return kernel.discretize(grid_spacing, tail_tol)


def make_kernel(spec: Mapping) -> Kernel:
    """Build a kernel from a config map {type, ...parameters}."""
    kind = spec.get("type", "dirac")
    if kind == "dirac":
        return DiracKernel()
    if kind == "gaussian":
        return GaussianKernel(float(spec["alpha"]))
    if kind == "lattice_sum":
        weights = spec["weights"]
        return LatticeSumKernel({int(j): float(w) for j, w in weights.items()})
    if kind == "tabulated":
        return TabulatedKernel.from_csv(spec["path"])
    raise KernelError(f"unknown kernel type '{kind}'")
