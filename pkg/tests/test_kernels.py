import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from latwave.kernels import (AbscissaError, DiracKernel, GaussianKernel, KernelError,
                             LatticeSumKernel, TabulatedKernel, make_kernel)


def test_dirac():
    k = DiracKernel()
    assert k.G(3.7) == 1.0
    assert tuple(k.G_derivs(-2.0)) == (0.0, 0.0)
    dk = k.discretize(0.37)
    assert dk.offsets.tolist() == [0] and dk.weights.tolist() == [1.0]


def test_gaussian_G_against_quadrature():
    alpha = 0.25
    for lam in (0.0, 0.5, 1.0, 2.0):
        integrand = lambda y: math.exp(-y * y / (4 * alpha) - lam * y) / math.sqrt(4 * math.pi * alpha)
        ref = quad(integrand, -np.inf, np.inf, epsabs=1e-13)[0]
        assert GaussianKernel(alpha).G(lam) == pytest.approx(ref, abs=1e-10)
    assert GaussianKernel(alpha).G(1.0) == pytest.approx(math.exp(0.25), abs=1e-15)


def test_gaussian_derivatives():
    k = GaussianKernel(0.25)
    g1, g2 = k.G_derivs(0.0)
    assert g1 == pytest.approx(0.0, abs=1e-15) and g2 == pytest.approx(0.5, abs=1e-15)
    h = 1e-4
    for lam in (0.3, 1.2):
        d1, d2 = k.G_derivs(lam)
        assert d1 == pytest.approx((k.G(lam + h) - k.G(lam - h)) / (2 * h), rel=1e-7)
        assert d2 == pytest.approx((k.G(lam + h) - 2 * k.G(lam) + k.G(lam - h)) / h ** 2, rel=1e-5)


def test_lattice_sum():
    k = LatticeSumKernel({-1: 0.5, 1: 0.5})
    assert k.G(1.0) == pytest.approx(math.cosh(1.0), abs=1e-15)
    d1, d2 = k.G_derivs(0.5)
    assert d1 == pytest.approx(math.sinh(0.5), abs=1e-15)
    assert d2 == pytest.approx(math.cosh(0.5), abs=1e-15)
    dk = LatticeSumKernel({0: 1.0}).discretize(0.5)
    assert dk.offsets.tolist() == [0] and dk.weights.tolist() == [1.0]
    dk = k.discretize(0.25)  # unit offset = 4 nodes
    assert sorted(dk.offsets.tolist()) == [-4, 4]


@pytest.mark.parametrize("weights", [{1: 1.0}, {-1: 0.7, 1: 0.3}, {0: 0.5}, {0: 1.5, 1: -0.25, -1: -0.25}])
def test_lattice_sum_rejects(weights):
    with pytest.raises(KernelError):
        LatticeSumKernel(weights)


def test_gaussian_discretization():
    k = GaussianKernel(0.25)
    dk = k.discretize(0.1, 1e-8)
    assert dk.weights.sum() == pytest.approx(1.0, abs=1e-14)
    dense = dk.dense()
    assert np.allclose(dense, dense[::-1], atol=1e-16)
    sigma = math.sqrt(2 * 0.25)
    assert 4 * sigma <= dk.radius * 0.1 <= 8 * sigma
    for lam in (0.5, 1.0):
        assert float(dk.moment(lam)) == pytest.approx(k.G(lam), abs=1e-6)


def test_tabulated_matches_gaussian(tmp_path):
    y = np.linspace(-8, 8, 1601)
    h = np.exp(-y ** 2 / 1.0) / math.sqrt(math.pi)
    k = TabulatedKernel(y, h)
    assert k.G(0.0) == pytest.approx(1.0, abs=1e-10)
    ref = quad(lambda s: math.exp(-s * s) / math.sqrt(math.pi) * math.exp(-0.8 * s), -8, 8)[0]
    assert abs(k.G(0.8) - ref) <= k.G_error_estimate(0.8) + 1e-8
    path = tmp_path / "h.csv"
    path.write_text("y,h\n" + "\n".join(f"{a!r},{b!r}" for a, b in zip(y.tolist(), h.tolist())))
    assert make_kernel({"type": "tabulated", "path": str(path)}).G(0.8) == pytest.approx(k.G(0.8))
    with pytest.raises(AbscissaError):
        k.G(2 * k.lambda0)


def test_tabulated_rejects_uneven():
    y = np.linspace(-2, 2, 41)
    h = np.exp(-(y - 0.3) ** 2)
    with pytest.raises(KernelError):
        TabulatedKernel(y, h)


def test_make_kernel():
    assert isinstance(make_kernel({"type": "dirac"}), DiracKernel)
    assert make_kernel({"type": "gaussian", "alpha": 0.5}).G(1.0) == pytest.approx(math.exp(0.5))
    assert make_kernel({"type": "lattice_sum", "weights": {"-1": 0.5, "1": 0.5}}).G(0.0) == 1.0
    with pytest.raises(KernelError):
        make_kernel({"type": "cauchy"})


@pytest.mark.parametrize("kernel", [GaussianKernel(0.25), GaussianKernel(2.0),
                                    LatticeSumKernel({-2: 0.25, 0: 0.5, 2: 0.25})])
def test_convolution_preserves_constants_and_evenness(kernel):
    from latwave import _backend
    dk = kernel.discretize(0.1)
    off = np.ascontiguousarray(dk.offsets, dtype=np.int64)
    w = np.ascontiguousarray(dk.weights)
    n = 801
    out = np.empty(n)
    K = 0.7
    _backend.kernels.sym_convolve(np.full(n, K), off, w, K, K, out)
    assert np.max(np.abs(out - K)) <= 1e-12
    x = np.linspace(-40, 40, n)
    u = np.exp(-x ** 2 / 50)
    _backend.kernels.sym_convolve(u, off, w, u[0], u[-1], out)
    assert np.max(np.abs(out - out[::-1])) <= 1e-10


@settings(max_examples=50, deadline=None)
@given(alpha=st.floats(0.05, 3.0), l1=st.floats(0.0, 3.0), gap=st.floats(1e-3, 2.0))
def test_G_convex(alpha, l1, gap):
    for k in (GaussianKernel(alpha), LatticeSumKernel({-1: 0.25, 0: 0.5, 1: 0.25})):
        l2 = l1 + gap
        second = k.G(l1) - 2 * k.G(0.5 * (l1 + l2)) + k.G(l2)
        assert second >= -1e-10
