"""Reaction nonlinearities f(u, v) for the delayed lattice equation.

A :class:`Model` bundles f, its first and second partials, and the positive
equilibrium K.  The first argument of f is the local density u(x, t), the
second the delayed nonlocal average v = (h*u)(x, t - tau).

Built-in models::

    host_vector     f = -a u + b v (1 - u)                 K = 1 - a/b
    fisher_kpp      f = v (1 - u)                          K = 1
    age_structured  f = -delta u^2 + p exp(-gamma tau) v   K = (p/delta) exp(-gamma tau)
    nicholson       f = -delta u + p v exp(-a v)           K = ln(p/delta) / a
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

Array = np.ndarray
Fn = Callable[[Array, Array], Array]

# Reaction codes understood by the compiled lattice kernel.
KIND_GENERIC = -1
KIND_HOST_VECTOR = 0
KIND_AGE_STRUCTURED = 1
KIND_NICHOLSON = 2

BUILTIN_NAMES = ("host_vector", "fisher_kpp", "age_structured", "nicholson")


class ModelError(ValueError):
    """Unknown model name or violated parameter constraint."""


@dataclass(frozen=True)
class Model:
    name: str
    params: Mapping[str, float]
    K: float
    f: Fn
    d1f: Fn
    d2f: Fn
    d11f: Fn
    d12f: Fn
    d21f: Fn
    d22f: Fn
    kind: int = KIND_GENERIC
    # packed parameters for the compiled kernel, meaning depends on ``kind``
    kernel_params: tuple[float, ...] = field(default=())

    def partials_at(self, u: float, v: float) -> tuple[float, float]:
        return float(self.d1f(u, v)), float(self.d2f(u, v))

    @property
    def at_zero(self) -> tuple[float, float]:
        """(d1f(0,0), d2f(0,0)), the linearization at the unstable state."""
        return self.partials_at(0.0, 0.0)

    @property
    def at_K(self) -> tuple[float, float]:
        """(d1f(K,K), d2f(K,K)), the linearization at the stable state."""
        return self.partials_at(self.K, self.K)

    def lipschitz_bound(self, n: int = 41) -> float:
        """Sampled bound of |d1f| + |d2f| over [0, K]^2."""
        u, v = _grid(self.K, n)
        return float(np.max(np.abs(self.d1f(u, v)) + np.abs(self.d2f(u, v))))

    def describe(self) -> dict:
        return {"name": self.name, "params": dict(self.params), "K": self.K}


def _grid(K: float, n: int) -> tuple[Array, Array]:
    s = np.linspace(0.0, K, n)
    return np.meshgrid(s, s, indexing="ij")


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ModelError(msg)


def _get(params: Mapping[str, float], key: str, default: float | None = None) -> float:
    if key in params:
        return float(params[key])
    if default is None:
        raise ModelError(f"missing parameter '{key}'")
    return default


def host_vector(a: float, b: float, name: str = "host_vector") -> Model:
    _require(b > a, f"host_vector requires b > a (got a={a}, b={b})")
    _require(a >= 0, f"host_vector requires a >= 0 (got a={a})")
    K = 1.0 - a / b
    zero = lambda u, v: np.zeros_like(np.asarray(u, dtype=float) + v)
    return Model(
        name=name,
        params={"a": a, "b": b},
        K=K,
        f=lambda u, v: -a * u + b * v * (1.0 - u),
        d1f=lambda u, v: -a - b * v + 0.0 * u,
        d2f=lambda u, v: b * (1.0 - u) + 0.0 * v,
        d11f=zero,
        d12f=lambda u, v: -b + 0.0 * (u + v),
        d21f=lambda u, v: -b + 0.0 * (u + v),
        d22f=zero,
        kind=KIND_HOST_VECTOR,
        kernel_params=(a, b),
    )


def age_structured(delta: float, p: float, gamma: float, tau: float,
                   alpha: float | None = None) -> Model:
    _require(delta > 0, f"age_structured requires delta > 0 (got {delta})")
    _require(p > 0, f"age_structured requires p > 0 (got {p})")
    _require(gamma > 0, f"age_structured requires gamma > 0 (got {gamma})")
    _require(tau >= 0, f"age_structured requires tau >= 0 (got {tau})")
    if alpha is not None:
        _require(alpha > 0, f"age_structured requires alpha > 0 (got {alpha})")
    q = p * math.exp(-gamma * tau)
    K = q / delta
    zero = lambda u, v: np.zeros_like(np.asarray(u, dtype=float) + v)
    params = {"delta": delta, "p": p, "gamma": gamma, "tau": tau}
    if alpha is not None:
        params["alpha"] = alpha
    return Model(
        name="age_structured",
        params=params,
        K=K,
        f=lambda u, v: -delta * u * u + q * v,
        d1f=lambda u, v: -2.0 * delta * u + 0.0 * v,
        d2f=lambda u, v: q + 0.0 * (u + v),
        d11f=lambda u, v: -2.0 * delta + 0.0 * (u + v),
        d12f=zero,
        d21f=zero,
        d22f=zero,
        kind=KIND_AGE_STRUCTURED,
        kernel_params=(delta, q),
    )


def nicholson(delta: float, p: float, a: float) -> Model:
    _require(delta > 0, f"nicholson requires delta > 0 (got {delta})")
    _require(p > delta, f"nicholson requires p > delta (got p={p}, delta={delta})")
    _require(a > 0, f"nicholson requires a > 0 (got {a})")
    K = math.log(p / delta) / a
    zero = lambda u, v: np.zeros_like(np.asarray(u, dtype=float) + v)
    return Model(
        name="nicholson",
        params={"delta": delta, "p": p, "a": a},
        K=K,
        f=lambda u, v: -delta * u + p * v * np.exp(-a * v),
        d1f=lambda u, v: -delta + 0.0 * (u + v),
        d2f=lambda u, v: p * np.exp(-a * v) * (1.0 - a * v) + 0.0 * u,
        d11f=zero,
        d12f=zero,
        d21f=zero,
        d22f=lambda u, v: p * np.exp(-a * v) * (a * a * v - 2.0 * a) + 0.0 * u,
        kind=KIND_NICHOLSON,
        kernel_params=(delta, p, a),
    )


def make_builtin(name: str, params: Mapping[str, float] | None = None) -> Model:
    """Construct one of the built-in models from a parameter map."""
    params = dict(params or {})
    if name == "host_vector":
        return host_vector(_get(params, "a"), _get(params, "b"))
    if name == "fisher_kpp":
        # f = v(1 - u); the a = 0, b = 1 member of the host-vector family
        unknown = set(params) - {"a", "b"}
        _require(not unknown, f"fisher_kpp takes no parameters (got {sorted(unknown)})")
        return host_vector(0.0, 1.0, name="fisher_kpp")
    if name == "age_structured":
        return age_structured(
            _get(params, "delta"), _get(params, "p"), _get(params, "gamma"),
            _get(params, "tau", 0.0),
            alpha=params.get("alpha"),
        )
    if name == "nicholson":
        return nicholson(_get(params, "delta"), _get(params, "p"), _get(params, "a"))
    raise ModelError(f"unknown model '{name}' (expected one of {', '.join(BUILTIN_NAMES)})")


def custom(name: str, K: float, f: Fn, d1f: Fn, d2f: Fn, d11f: Fn | None = None,
           d12f: Fn | None = None, d22f: Fn | None = None,
           params: Mapping[str, float] | None = None) -> Model:
    """Wrap a user-supplied nonlinearity (second partials default to zero)."""
    zero = lambda u, v: np.zeros_like(np.asarray(u, dtype=float) + v)
    return Model(
        name=name, params=dict(params or {}), K=float(K), f=f, d1f=d1f, d2f=d2f,
        d11f=d11f or zero, d12f=d12f or zero, d21f=d12f or zero, d22f=d22f or zero,
    )


# --------------------------------------------------------------------------
# hypothesis validation


@dataclass
class HypothesisCheck:
    name: str
    passed: bool
    worst: float
    at: tuple[float, float] | None = None
    detail: str = ""

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "passed": bool(self.passed),
            "worst": float(self.worst),
            "at": None if self.at is None else [float(self.at[0]), float(self.at[1])],
            "detail": self.detail,
        }


@dataclass
class ValidationReport:
    model: str
    grid_n: int
    checks: list[HypothesisCheck]
    M: float
    sigma: float = 1.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def __getitem__(self, name: str) -> HypothesisCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)

    def as_dict(self) -> dict:
        return {
            "model": self.model,
            "grid_n": self.grid_n,
            "passed": self.passed,
            "M": self.M,
            "sigma": self.sigma,
            "checks": [c.as_dict() for c in self.checks],
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)


def _worst(values: Array, u: Array, v: Array, want: str) -> tuple[float, tuple[float, float]]:
    idx = np.unravel_index(np.argmin(values) if want == "min" else np.argmax(values), values.shape)
    return float(values[idx]), (float(u[idx]), float(v[idx]))


def _sign_check(name: str, values: Array, u: Array, v: Array, sign: int,
                slack: float = 1e-12, strict: bool = False) -> HypothesisCheck:
    """sign=+1 asks values >= 0 (> 0 if strict), sign=-1 asks values <= 0."""
    s = sign * values
    worst, at = _worst(s, u, v, "min")
    ok = worst > 0 if strict else worst >= -slack
    bad = (s <= 0) if strict else (s < -slack)
    detail = ""
    if bad.any():
        detail = (f"violated on {int(bad.sum())}/{bad.size} samples; "
                  f"u in [{u[bad].min():.4g}, {u[bad].max():.4g}], "
                  f"v in [{v[bad].min():.4g}, {v[bad].max():.4g}]")
    return HypothesisCheck(name, bool(ok), sign * worst, at, detail)


def validate_hypotheses(model: Model, grid_n: int = 32, n_random: int = 100,
                        seed: int = 0) -> ValidationReport:
    """Spot-check the monostability hypotheses on an n x n grid of [0, K]^2."""
    if grid_n < 8:
        raise ValueError("grid_n must be at least 8")
    K = model.K
    u, v = _grid(K, grid_n)
    checks: list[HypothesisCheck] = []

    f00 = float(model.f(0.0, 0.0))
    fKK = float(model.f(K, K))
    eq_err = max(abs(f00), abs(fKK))
    checks.append(HypothesisCheck("F1_equilibria", eq_err <= 1e-12, eq_err, None,
                                  f"f(0,0)={f00:.3e}, f(K,K)={fKK:.3e}"))

    s = np.linspace(0.0, K, grid_n)[1:-1]
    fd = model.f(s, s)
    worst = float(fd.min())
    checks.append(HypothesisCheck("F1_positive_diagonal", worst > 0, worst,
                                  (float(s[np.argmin(fd)]),) * 2))

    checks.append(_sign_check("F1_d2f_nonnegative", model.d2f(u, v), u, v, +1))

    d1_0, d2_0 = model.at_zero
    d1_K, d2_K = model.at_K
    lin = d1_0 * u + d2_0 * v - model.f(u, v)
    checks.append(_sign_check("F2_sublinear_lower", lin, u, v, +1))
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(u + v > 0, lin / (u + v) ** 2, 0.0)
    M = float(ratio.max())
    checks.append(HypothesisCheck("F2_sublinear_upper", np.isfinite(M), M, None,
                                  f"empirical M={M:.6g} with sigma=1"))
    checks.append(HypothesisCheck("F2_stable_K", d1_K + d2_K < 0, d1_K + d2_K, (K, K)))
    checks.append(HypothesisCheck("F2_unstable_zero", d1_0 + d2_0 > 0, d1_0 + d2_0, (0.0, 0.0)))

    checks.append(HypothesisCheck("F3_d1f_zero_nonpositive", d1_0 <= 0, d1_0, (0.0, 0.0)))
    for label, fn in (("d11f", model.d11f), ("d12f", model.d12f),
                      ("d21f", model.d21f), ("d22f", model.d22f)):
        checks.append(_sign_check(f"F3_{label}_nonpositive", fn(u, v), u, v, -1))

    err = partials_fd_error(model, n_random=n_random, seed=seed)
    checks.append(HypothesisCheck("partials_match_fd", err <= 1e-6, err, None,
                                  "max |analytic - central FD| / (1 + |analytic|)"))
    return ValidationReport(model.name, grid_n, checks, M)


def partials_fd_error(model: Model, n_random: int = 100, seed: int = 0,
                      step: float = 1e-6) -> float:
    """Worst scaled mismatch between analytic first/second partials and central FD."""
    rng = np.random.default_rng(seed)
    K = model.K
    u = rng.uniform(0.0, K, n_random)
    v = rng.uniform(0.0, K, n_random)
    h = step * max(1.0, K)
    h2 = 1e-4 * max(1.0, K)

    def scaled(exact, approx):
        exact = np.asarray(exact, dtype=float)
        return float(np.max(np.abs(exact - approx) / (1.0 + np.abs(exact))))

    f = model.f
    errs = [
        scaled(model.d1f(u, v), (f(u + h, v) - f(u - h, v)) / (2 * h)),
        scaled(model.d2f(u, v), (f(u, v + h) - f(u, v - h)) / (2 * h)),
        scaled(model.d11f(u, v), (model.d1f(u + h2, v) - model.d1f(u - h2, v)) / (2 * h2)),
        scaled(model.d12f(u, v), (model.d1f(u, v + h2) - model.d1f(u, v - h2)) / (2 * h2)),
        scaled(model.d21f(u, v), (model.d2f(u + h2, v) - model.d2f(u - h2, v)) / (2 * h2)),
        scaled(model.d22f(u, v), (model.d2f(u, v + h2) - model.d2f(u, v - h2)) / (2 * h2)),
    ]
    return max(errs)
