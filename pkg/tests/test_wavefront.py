import numpy as np
import pytest

from latwave.dispersion import Problem, find_cstar, find_lambda_roots, find_upsilon
from latwave.kernels import DiracKernel, GaussianKernel
from latwave.models import host_vector, make_builtin, nicholson
from latwave.wavefront import (NotConvergedError, WaveProfile, measure_speed, profile_residual,
                               relax_profile, tail_slopes)

FISHER = Problem(make_builtin("fisher_kpp"), DiracKernel(), d=1.0, tau=0.0)


@pytest.fixture(scope="module")
def fisher_front():
    cs = find_cstar(FISHER)
    return relax_profile(FISHER, cs.c_star + 0.5)


def test_fisher_front_quality(fisher_front):
    pr = fisher_front
    K = FISHER.K
    assert pr.residual_sup <= 1e-5 * K
    assert np.all(np.diff(pr.phi) > 0)
    assert np.all((pr.phi > 0) & (pr.phi < K))
    assert pr.phi[0] < 1e-3 * K and K - pr.phi[-1] < 1e-3 * K
    assert pr(np.array([0.0]))[0] == pytest.approx(K / 2, abs=1e-12)


def test_fisher_tail_rates(fisher_front):
    c = fisher_front.c
    l1, _ = find_lambda_roots(FISHER, c)
    ts = tail_slopes(fisher_front, FISHER)
    assert abs(ts.left_slope - l1) / l1 <= 0.05
    ups = find_upsilon(FISHER, c)
    assert abs(ts.right_slope - ups) / ups <= 0.05


def test_unique_up_to_translation(fisher_front):
    other = relax_profile(FISHER, fisher_front.c, seed_shift=4.0)
    assert np.max(np.abs(other.phi - fisher_front.phi)) <= 1e-6 * FISHER.K


def test_operator_sanity(fisher_front):
    pr = fisher_front
    const = WaveProfile(pr.c, pr.xi, np.full_like(pr.phi, FISHER.K), FISHER.K, pr.lam_left,
                        pr.upsilon, pr.m)
    assert profile_residual(FISHER, const, extension="constant")[0] <= 1e-12
    base = profile_residual(FISHER, pr)[0]
    moved = profile_residual(FISHER, pr.shifted(1.0))[0]
    assert abs(moved - base) <= 1e-12


def test_speed_consistency(hv1, hv1_front):
    c_hat = measure_speed(hv1, hv1_front, T=20.0)
    assert abs(c_hat - hv1_front.c) / hv1_front.c <= 0.01


def test_critical_left_tail_prefactor(hv1):
    cs = find_cstar(hv1)
    pr = relax_profile(hv1, cs.c_star)
    ts = tail_slopes(pr, hv1)
    assert 0.85 * cs.lam_star <= ts.left_slope <= 1.05 * cs.lam_star
    assert ts.left_slope < cs.lam_star
    assert ts.prefactor_wins


def test_refinement_of_upwind_relaxation(hv1):
    cs = find_cstar(hv1)
    c = cs.c_star + 0.5
    r10 = relax_profile(hv1, c, polish=False, m=10).residual_sup
    r20 = relax_profile(hv1, c, polish=False, m=20).residual_sup
    assert r10 / r20 >= 1.8


@pytest.mark.parametrize("problem", [
    Problem(nicholson(1.0, 2.0, 1.0), GaussianKernel(0.25), d=1.0, tau=1.0),
    Problem(host_vector(0.5, 1.0), GaussianKernel(0.25), d=0.5, tau=0.5),
])
def test_nonlocal_fronts(problem):
    cs = find_cstar(problem)
    pr = relax_profile(problem, cs.c_star + 0.5)
    assert pr.residual_sup <= 1e-5 * problem.K
    assert pr.monotonicity_margin > 0


@pytest.mark.slow
def test_below_cstar_does_not_converge(hv1):
    cs = find_cstar(hv1)
    with pytest.raises(NotConvergedError, match="below c"):
        relax_profile(hv1, cs.c_star - 0.2)
