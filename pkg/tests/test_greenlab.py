import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latwave.dispersion import Problem, find_cstar
from latwave.greenlab import (DelayedLinearSystem, GreenError, GreenProbe, delayed_exp,
                              delayed_exp_series, fit_decay_bound, fourier_coefficients,
                              heat_kernel_mass_and_bound, k2_bound, method_of_steps,
                              solve_linear_dde)
from latwave.kernels import DiracKernel, GaussianKernel
from latwave.models import host_vector, nicholson

from oracles import dde_steps, delayed_exp_exact


def test_delayed_exp_table():
    assert delayed_exp(1.0, 1.0, -0.5) == 1.0
    assert delayed_exp(1.0, 1.0, -1.5) == 0.0
    assert delayed_exp(1.0, 1.0, 0.5) == pytest.approx(1.5, abs=1e-15)
    assert delayed_exp(1.0, 1.0, 1.5) == pytest.approx(2.625, abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(b=st.fractions(-2, 2, max_denominator=16), tau=st.fractions(Fraction(1, 8), 2, max_denominator=16),
       t=st.fractions(-2, 8, max_denominator=64))
def test_delayed_exp_exact_rational(b, tau, t):
    exact = delayed_exp_exact(b, tau, t)
    got = delayed_exp(float(b), float(tau), float(t))
    assert got == pytest.approx(float(exact), rel=1e-12, abs=1e-12)
    assert delayed_exp_series(float(b), float(tau), float(t)) == pytest.approx(float(exact), rel=1e-12, abs=1e-12)


def test_delayed_exp_solves_its_equation():
    h = 1e-4
    for b, tau in ((0.7, 1.0), (-1.3, 0.4)):
        t = np.linspace(0.05, 5, 97)
        t = t[np.abs(t / tau - np.round(t / tau)) > 10 * h / tau]
        lhs = (delayed_exp(b, tau, t + h) - delayed_exp(b, tau, t - h)) / (2 * h)
        rhs = b * delayed_exp(b, tau, t - tau)
        assert np.max(np.abs(lhs - rhs)) <= 1e-6 * max(1, np.max(np.abs(rhs)))


def test_delayed_exp_array_matches_scalar():
    t = np.linspace(-1.5, 4.0, 23)
    arr = delayed_exp(0.9, 0.7, t)
    assert arr.shape == t.shape
    assert np.allclose(arr, [delayed_exp(0.9, 0.7, float(s)) for s in t], rtol=0, atol=0)
    with pytest.raises(GreenError):
        delayed_exp(1.0, 0.0, 1.0)


def test_plain_exponential_and_c3():
    sys = DelayedLinearSystem(1.3, 0.0, 0.5)
    assert solve_linear_dde(sys, 2.0) == pytest.approx(math.exp(-2.6), rel=1e-13)
    s2 = DelayedLinearSystem(0.4, 0.9, 1.7)
    assert abs(s2.c3 - 0.9 * math.exp(0.4 * 1.7)) <= 1e-14 * s2.c3


def test_formula_example_against_independent_steps():
    sys = DelayedLinearSystem(1.0, 0.5, 1.0)
    ref = dde_steps(lambda z, zd: -z + 0.5 * zd, lambda s: 1.0, 1.0, 2.0)
    assert solve_linear_dde(sys, 2.0) == pytest.approx(ref, abs=1e-8)
    assert method_of_steps(sys, 2.0) == pytest.approx(ref, abs=1e-9)


def test_random_triples_at_three_tau():
    rng = np.random.default_rng(11)
    for _ in range(50):
        c1 = rng.uniform(0, 3)
        c2 = rng.uniform(0, c1)
        tau = rng.uniform(0.1, 2)
        sys = DelayedLinearSystem(c1, c2, tau)
        assert solve_linear_dde(sys, 3 * tau) == pytest.approx(method_of_steps(sys, 3 * tau), abs=1e-7)


def test_decay_bound_fit():
    for c1, c2, tau in ((1.0, 0.5, 1.0), (2.0, 1.9, 0.3), (0.5, 0.0, 2.0)):
        b = fit_decay_bound(c1, c2, tau)
        assert b.holds and 0 < b.eps <= 1
    with pytest.raises(GreenError):
        fit_decay_bound(0.5, 1.0, 1.0)


def test_heat_kernel():
    r = heat_kernel_mass_and_bound(GreenProbe(1.0, 0.5, 1.0, 10.0))
    assert abs(r.mass - 1) <= 1e-12
    assert r.bound == pytest.approx(math.sqrt(math.pi / 5), rel=1e-15)
    assert r.peak < 0.25 * r.bound
    peaks = [heat_kernel_mass_and_bound(GreenProbe(1.0, 0.5, 1.0, t)).peak for t in (0.1, 1, 10, 40, 160)]
    assert all(a >= b for a, b in zip(peaks, peaks[1:]))
    scaled = [p * math.sqrt(t) for p, t in zip(peaks[2:], (10, 40, 160))]
    assert abs(scaled[2] - scaled[1]) < abs(scaled[1] - scaled[0])
    assert scaled[-1] <= math.sqrt(math.pi / 0.5)
    with pytest.raises(GreenError):
        GreenProbe(1.0, 1.5, 1.0, 1.0)


def test_symbol_properties():
    pr = GreenProbe(0.7, 0.3, 0.8, 1.0)
    assert pr.symbol(0.0) == 0
    w = np.linspace(-np.pi, np.pi, 101)
    re = np.real(pr.symbol(w))
    assert np.allclose(re, 2 * 0.7 * 0.3 * math.cosh(0.8) * (np.cos(w) - 1), atol=1e-15)
    assert np.all(re <= 0)


@pytest.mark.parametrize("problem", [
    Problem(host_vector(0.5, 1.0), DiracKernel(), tau=1.0),
    Problem(nicholson(1.0, 2.0, 1.0), GaussianKernel(0.25), tau=1.0),
])
def test_fourier_coefficients(problem):
    cs = find_cstar(problem)
    w = np.linspace(-np.pi, np.pi, 256)
    c1, c2 = fourier_coefficients(problem, cs.c_star, cs.lam_star, w)
    k2 = k2_bound(problem, cs.c_star, cs.lam_star)
    assert np.max(np.abs(c2)) <= k2 * (1 + 1e-12)
    c10 = fourier_coefficients(problem, cs.c_star, cs.lam_star, 0.0)[0]
    lam = cs.lam_star
    assert np.allclose(np.real(c1) - np.real(c10), 2 * problem.d * math.cosh(lam) * (1 - np.cos(w)), atol=1e-12)
    f1 = problem.model.at_zero[0]
    alt = cs.c_star * lam - problem.d * (math.exp(lam) + math.exp(-lam) - 2) - f1
    assert k2 == pytest.approx(alt, abs=1e-9)
