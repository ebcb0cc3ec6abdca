import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bicure.numerics import (
    GL_LEVELS,
    fd_gradient,
    fd_hessian,
    gamma_density,
    gamma_mixture_integral,
    gauss_legendre,
    log_laplace,
    stable_log1p_pow,
    tensor_integrate,
)


@pytest.mark.parametrize("level", [32, 64, 128])
def test_gauss_legendre_weights(level):
    rule = gauss_legendre(level)
    assert np.all(rule.weights > 0)
    assert abs(rule.weights.sum() - 1.0) < 1e-14
    assert np.all((rule.nodes > 0) & (rule.nodes < 1))


def test_gauss_legendre_exactness():
    rule = gauss_legendre(32)
    assert rule.integrate(lambda x: np.ones_like(x)) == pytest.approx(1.0, abs=1e-15)
    assert abs(rule.integrate(lambda x: x**3) - 0.25) < 1e-14


def test_tensor_integrate_product():
    assert abs(tensor_integrate(lambda u, v: u * v, 32) - 0.25) < 1e-14


def test_levels_are_nested_sizes():
    assert GL_LEVELS[:3] == (32, 64, 128)


@pytest.mark.parametrize("gamma", [0.25, 1.0, 4.0])
def test_gamma_density_normalized(gamma):
    assert gamma_mixture_integral(lambda w: np.ones_like(w), gamma) == pytest.approx(1.0, rel=1e-9)
    assert gamma_mixture_integral(lambda w: w, gamma) == pytest.approx(1.0, rel=1e-9)


@pytest.mark.parametrize("gamma,s", [(0.25, 0.7), (1.0, 2.0), (4.0, 0.3), (0.5, 5.0)])
def test_gamma_mixture_laplace_identity(gamma, s):
    got = gamma_mixture_integral(lambda w: np.exp(-s * w), gamma)
    assert got == pytest.approx((1 + gamma * s) ** (-1 / gamma), rel=1e-9)


def test_gamma_density_matches_scipy():
    from scipy import stats

    w = np.linspace(0.05, 6, 40)
    for g in (0.3, 2.0):
        assert np.allclose(gamma_density(w, g), stats.gamma(a=1 / g, scale=g).pdf(w), rtol=1e-12)


def test_stable_log1p_pow_examples():
    assert abs(stable_log1p_pow(1e-12, 1.0) - math.exp(-1)) < 1e-9
    assert stable_log1p_pow(1.0, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert stable_log1p_pow(0.5, 0.0) == 1.0


def test_stable_log1p_pow_small_gamma_branch_is_continuous():
    s = np.array([0.1, 1.0, 10.0])
    below = stable_log1p_pow(0.99e-8, s)
    above = stable_log1p_pow(1.01e-8, s)
    assert np.allclose(below, above, rtol=1e-12)


@settings(max_examples=1000, deadline=None)
@given(st.floats(1e-10, 20.0), st.floats(0.0, 50.0), st.floats(1e-6, 10.0))
def test_stable_log1p_pow_decreasing_in_s(gamma, s, ds):
    assert stable_log1p_pow(gamma, s + ds) <= stable_log1p_pow(gamma, s)


def test_log_laplace_extra_power():
    g, s = 0.7, 1.3
    assert float(log_laplace(g, s, 1.0)) == pytest.approx(-(1 / g + 1) * math.log1p(g * s), rel=1e-14)


def test_fd_gradient_and_hessian_of_quadratic():
    a = np.array([[3.0, 1.0], [1.0, 2.0]])

    def f(pts):
        pts = np.atleast_2d(pts)
        return -0.5 * np.einsum("ij,jk,ik->i", pts, a, pts)

    z = np.array([0.4, -1.2])
    assert np.allclose(fd_gradient(f, z), -a @ z, atol=1e-6)
    assert np.allclose(fd_hessian(f, z), -a, atol=1e-5)
