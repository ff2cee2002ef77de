import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from latwave.models import (ModelError, age_structured, custom, host_vector, make_builtin,
                            nicholson, partials_fd_error, validate_hypotheses)

BUILTINS = [
    ("host_vector", {"a": 0.5, "b": 1.0}),
    ("fisher_kpp", {}),
    ("age_structured", {"delta": 1.0, "p": 2.0, "gamma": 0.5, "tau": 1.0}),
    ("nicholson", {"delta": 1.0, "p": 2.0, "a": 1.0}),
]


def test_carrying_capacities():
    assert host_vector(0.5, 1.0).K == 0.5
    assert nicholson(1.0, 2.0, 1.0).K == pytest.approx(0.6931471805599453, abs=1e-15)
    m = age_structured(1.0, 2.0, 0.5, 1.0)
    assert m.K == pytest.approx(2.0 * math.exp(-0.5), rel=1e-15)


def test_fisher_limit_is_plus_sign():
    m = make_builtin("fisher_kpp")
    assert m.K == 1.0
    assert float(m.f(0.25, 0.5)) == 0.5 * 0.75


@pytest.mark.parametrize("name,params", BUILTINS)
def test_equilibria_exact(name, params):
    m = make_builtin(name, params)
    assert abs(float(m.f(0.0, 0.0))) <= 1e-12
    assert abs(float(m.f(m.K, m.K))) <= 1e-12


@pytest.mark.parametrize("name,params", BUILTINS)
def test_hypotheses_pass(name, params):
    rep = validate_hypotheses(make_builtin(name, params), grid_n=32)
    assert rep.passed, rep.to_json()


def test_fisher_small_grid_constant():
    rep = validate_hypotheses(make_builtin("fisher_kpp"), grid_n=8)
    assert rep.passed
    # uv <= (u+v)^2 / 4, attained on the diagonal
    assert rep.M == pytest.approx(0.25, abs=1e-12)


def test_host_vector_partials_at_equilibria():
    a, b = 0.3, 1.7
    m = host_vector(a, b)
    assert m.at_zero == (pytest.approx(-a), pytest.approx(b))
    assert m.at_K == (pytest.approx(-b), pytest.approx(a))


def test_violated_hypothesis_is_reported():
    # f = v - u^2 + 2 u v has positive cross partial, so the F3 check must flag it
    m = custom("bad", 1.0 + math.sqrt(2.0), f=lambda u, v: v - u * u + 2 * u * v - v * v * 0,
               d1f=lambda u, v: -2 * u + 2 * v, d2f=lambda u, v: 1 + 2 * u + 0 * v,
               d12f=lambda u, v: 2.0 + 0 * u)
    rep = validate_hypotheses(m)
    assert not rep["F3_d12f_nonpositive"].passed
    assert "violated" in rep["F3_d12f_nonpositive"].detail


@pytest.mark.parametrize("bad", [
    lambda: host_vector(1.0, 0.5),
    lambda: host_vector(-0.1, 1.0),
    lambda: nicholson(1.0, 0.5, 1.0),
    lambda: age_structured(1.0, 1.0, 0.0, 1.0),
    lambda: make_builtin("logistic", {}),
    lambda: make_builtin("fisher_kpp", {"r": 1.0}),
    lambda: make_builtin("host_vector", {"a": 0.5}),
])
def test_bad_parameters(bad):
    with pytest.raises(ModelError):
        bad()


@settings(max_examples=40, deadline=None)
@given(a=st.floats(0.0, 0.9), b=st.floats(1.0, 3.0), seed=st.integers(0, 2**16))
def test_fd_partials_host_vector(a, b, seed):
    assert partials_fd_error(host_vector(a, b), seed=seed) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(delta=st.floats(0.2, 2.0), ratio=st.floats(1.1, 7.0), a=st.floats(0.2, 3.0),
       seed=st.integers(0, 2**16))
def test_fd_partials_nicholson(delta, ratio, a, seed):
    m = nicholson(delta, delta * ratio, a)
    assert abs(float(m.f(m.K, m.K))) <= 1e-12 * max(1.0, delta * m.K)
    assert partials_fd_error(m, seed=seed) <= 1e-6
