import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latwave import dispersion as D
from latwave.kernels import DiracKernel, GaussianKernel, LatticeSumKernel
from latwave.models import age_structured, custom, host_vector, make_builtin, nicholson

from oracles import bisect, delta_direct, speed_scan


def P(model, kernel=None, d=1.0, tau=0.0):
    return D.Problem(model, kernel or DiracKernel(), d=d, tau=tau)


FISHER = P(make_builtin("fisher_kpp"))
HV0 = P(host_vector(0.5, 1.0))
HV1 = P(host_vector(0.5, 1.0), tau=1.0)


def test_delta_values():
    assert D.eval_Delta(HV1, 1.3, 0.0) == pytest.approx(-0.5, abs=1e-15)
    assert D.eval_Delta(FISHER, 3.0, 1.0) == pytest.approx(3 - (math.e + 1 / math.e - 2) - 1, abs=1e-14)
    ref = 0.5 - (2 * math.cosh(0.5) - 2) + 0.5 - math.exp(-0.5)
    assert D.eval_Delta(HV1, 1.0, 0.5) == pytest.approx(ref, abs=1e-12)


def test_delta_tilde_values():
    assert D.eval_Delta_tilde(HV1, 1.3, 0.0) == pytest.approx(-0.5, abs=1e-15)
    assert D.eval_Delta_tilde(HV0, 2.0, 1.0) == pytest.approx(2 + (math.e + 1 / math.e - 2) - 1 + 0.5, abs=1e-14)


def test_delta_derivatives_fd():
    h = 1e-6
    for prob in (HV1, P(nicholson(1, 2, 1), GaussianKernel(0.25), tau=1.0)):
        for c, lam in ((1.0, 0.4), (2.0, 0.9)):
            fd_l = (D.eval_Delta(prob, c, lam + h) - D.eval_Delta(prob, c, lam - h)) / (2 * h)
            fd_c = (D.eval_Delta(prob, c + h, lam) - D.eval_Delta(prob, c - h, lam)) / (2 * h)
            assert D.dDelta_dlam(prob, c, lam) == pytest.approx(fd_l, rel=1e-7, abs=1e-8)
            assert D.dDelta_dc(prob, c, lam) == pytest.approx(fd_c, rel=1e-7, abs=1e-8)


def test_fisher_cstar_oracle_and_continuum_bound():
    cs = D.find_cstar(FISHER)
    c_o, l_o = speed_scan(1.0, 0.0, -0.0, 1.0, lambda l: np.ones_like(l), 3.0, step=1e-5)
    assert abs(cs.c_star - c_o) <= 1e-6 and abs(cs.lam_star - l_o) <= 1e-4
    assert cs.c_star == pytest.approx(2.0734446842, abs=1e-9)
    # the continuum Laplacian gives exactly 2; the lattice is faster
    c_cont = min((l * l + 1) / l for l in np.arange(1e-3, 3, 1e-4))
    assert c_cont == pytest.approx(2.0, abs=1e-7) and cs.c_star > 2.0


def test_delay_lowers_cstar():
    assert D.find_cstar(HV1).c_star < D.find_cstar(HV0).c_star


def test_roots_at_cstar_coincide():
    cs = D.find_cstar(HV1)
    assert tuple(D.find_lambda_roots(HV1, cs.c_star, cs)) == (cs.lam_star, cs.lam_star)


def test_fisher_roots_c3():
    F = lambda l: 3 * l - (math.exp(l) + math.exp(-l) - 1)
    l1 = bisect(F, 1e-9, 0.9071, tol=1e-13)
    l2 = bisect(F, 0.9071, 5.0, tol=1e-13)
    r = D.find_lambda_roots(FISHER, 3.0)
    assert r.lam1 == pytest.approx(l1, abs=1e-12) and r.lam2 == pytest.approx(l2, abs=1e-12)
    assert r.lam1 < 0.91 < r.lam2


def test_square_root_splitting():
    cs = D.find_cstar(FISHER)
    gaps = []
    for eps in (1e-6, 1e-4):
        r = D.find_lambda_roots(FISHER, cs.c_star + eps, cs)
        gaps.append(r.lam2 - r.lam1)
    assert 1e-4 < gaps[0] < 1e-2
    ratio = gaps[1] / gaps[0]
    assert 10 / 5 <= ratio <= 10 * 5


def test_below_cstar_raises():
    cs = D.find_cstar(HV1)
    with pytest.raises(D.BelowMinimalSpeedError):
        D.find_lambda_roots(HV1, cs.c_star - 0.1, cs)
    with pytest.raises(D.BelowMinimalSpeedError):
        D.find_decay_rate(HV1, cs.c_star, cstar=cs)
    lam = np.linspace(1e-3, 5, 2000)
    assert max(D.eval_Delta(HV1, cs.c_star - 0.05, l) for l in lam) < 0


def test_upsilon_oracles():
    F = lambda l: 2 * l + 2 * math.cosh(l) - 2 - 1 + 0.5
    ref = bisect(F, 0.0, 10.0, tol=1e-14)
    grid = np.linspace(1e-6, 10, 10001)
    assert np.count_nonzero(np.diff(np.sign([F(x) for x in grid]))) == 1
    assert D.find_upsilon(HV0, 2.0) == pytest.approx(ref, abs=1e-12)
    # larger |d1f(K,K)| pushes the approach rate up
    mk = lambda r: custom("lin", 1.0, lambda u, v: r * (1 - u) + 0 * v,
                          lambda u, v: -r + 0 * u, lambda u, v: 0 * u)
    assert D.find_upsilon(P(mk(1.0)), 1.0) < D.find_upsilon(P(mk(2.0)), 1.0)


def test_M_N_identities():
    c, lam = 1.5, 0.4
    assert D.eval_M(HV1, c, 0.0, lam) == pytest.approx(D.eval_Delta(HV1, c, lam), abs=1e-15)
    assert D.eval_N(HV1, 0.0) == pytest.approx(-0.5, abs=1e-15)
    for mu in (0.1, 0.4):
        assert D.eval_N(HV1, mu) == pytest.approx(mu - 1.0 + 0.5 * math.exp(mu), abs=1e-15)


def test_decay_rate_tau0_bound():
    cs = D.find_cstar(HV0)
    dr = D.find_decay_rate(HV0, cs.c_star + 0.5, cstar=cs)
    b = D.decay_rate_bounds(HV0, cs.c_star + 0.5, dr.lam)
    assert b.mu_N == pytest.approx(1 / 6, abs=1e-13)
    assert dr.mu == pytest.approx(min(b), abs=1e-15)
    s = 3 * dr.mu - 1e-9
    assert D.eval_M(HV0, cs.c_star + 0.5, s, dr.lam) > 0 and D.eval_N(HV0, s) < 0


def test_decay_rate_slows_with_delay():
    mus = []
    for tau in (0.5, 4.0):
        p = P(host_vector(0.5, 1.0), tau=tau)
        cs = D.find_cstar(p)
        mus.append(D.find_decay_rate(p, cs.c_star + 0.5, cstar=cs).mu)
    assert mus[1] < mus[0]


@pytest.mark.parametrize("kind,params,tau,expected", [
    ("host_vector", {"a": 0.0, "b": 1.0}, 3.0, 1 / 3),
    ("host_vector", {"a": 0.5, "b": 1.0}, 0.0, 1 / 6),
    ("age_structured", {"p": 1.0, "gamma": 0.0}, 0.0, 1 / 3),
])
def test_rate_equation_closed_forms(kind, params, tau, expected):
    assert D.solve_rate_equation(kind, params, tau) == pytest.approx(expected, abs=1e-12)


def test_rate_equation_nicholson_precondition():
    with pytest.raises(D.DispersionError):
        D.solve_rate_equation("nicholson", {"delta": 1.0, "p": 2.0}, 1.0)
    # printed form: 3mu - delta - delta kappa e^{3 mu tau} with kappa > 0 has a
    # positive root only for small tau; the N-consistent form always has one
    mu_p = D.solve_rate_equation("nicholson", {"delta": 1.0, "p": 1.5}, 0.1)
    mu_n = D.solve_rate_equation("nicholson", {"delta": 1.0, "p": 1.5}, 0.1, convention="n_bound")
    assert 0 < mu_n < mu_p
    with pytest.raises(D.DispersionError, match="no positive root"):
        D.solve_rate_equation("nicholson", {"delta": 1.0, "p": 1.5}, 1.0)
    assert D.solve_rate_equation("nicholson", {"delta": 1.0, "p": 1.5}, 1.0, convention="n_bound") > 0


def test_analyze_report():
    rep = D.analyze(HV1, offsets=[0.1, 0.5, 1.0])
    d = rep.as_dict()
    assert d["c_star"] == rep.c_star and len(d["table"]) == 3
    assert d["residuals"]["Delta_at_tangency"] <= 1e-9
    assert all(r["Delta_lambda1"] <= 1e-9 for r in d["residuals"]["roots"])


def test_problem_tau_mismatch():
    with pytest.raises(D.DispersionError):
        D.Problem(age_structured(1.0, 2.0, 0.5, 1.0), DiracKernel(), tau=2.0)


@settings(max_examples=30, deadline=None)
@given(c=st.floats(0.5, 4.0), l1=st.floats(0.01, 3.0), gap=st.floats(0.01, 1.0),
       tau=st.floats(0.0, 2.0))
def test_delta_concave_in_lambda(c, l1, gap, tau):
    p = P(host_vector(0.5, 1.0), GaussianKernel(0.25), tau=tau)
    vals = [D.eval_Delta(p, c, l) for l in (l1, l1 + gap, l1 + 2 * gap)]
    assert vals[0] - 2 * vals[1] + vals[2] <= 1e-10


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.0, 0.8), b=st.floats(1.0, 2.5), tau=st.floats(0.0, 2.0), d=st.floats(0.3, 3.0))
def test_tangency_and_root_residuals(a, b, tau, d):
    p = P(host_vector(a, b), d=d, tau=tau)
    cs = D.find_cstar(p)
    assert abs(D.eval_Delta(p, cs.c_star, cs.lam_star)) <= 1e-9
    assert abs(D.dDelta_dlam(p, cs.c_star, cs.lam_star)) <= 1e-8
    prev = None
    for k in range(1, 11):
        c = cs.c_star + 0.1 * k
        r = D.find_lambda_roots(p, c, cs)
        for lam in r:
            assert abs(D.eval_Delta(p, c, lam)) <= 1e-9 * (1 + abs(D.dDelta_dlam(p, c, lam)))
        assert 0 < r.lam1 < cs.lam_star < r.lam2
        if prev is not None:
            assert r.lam1 < prev.lam1 and r.lam2 > prev.lam2
        prev = r
