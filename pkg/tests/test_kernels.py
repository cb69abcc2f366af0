import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from matspec.core import model_data
from matspec.kernels import (S_dd, Wsin, Wtilde, Wtilde_dx, assemble, cos_product_integral,
                             sin_over, sin_product_integral, sinc, wtilde, wtilde_dx, xi_sequence)
from oracles import mp_cos_product, mp_quotient, mp_sin_product

finite = dict(allow_nan=False, allow_infinity=False)


def mp_S(a, x):
    a, x = mp.mpf(a), mp.mpf(x)
    return x if a == 0 else mp.sin(a * x) / a


@pytest.mark.parametrize("a1,a2,x", [
    (1.3, 0.7, 2.0), (2.0, 2.0 + 1e-9, 3.0), (0.0, 1e-7, np.pi), (5.0, 4.9999, 0.3),
    (1e-3, -1e-3, 3.1), (30.0, 29.5, 3.0), (0.4, 0.4, 1.0), (12.0, 12.0 + 1e-5, np.pi)])
def test_S_dd_matches_high_precision(a1, a2, x):
    ref = mp_quotient(lambda a: mp_S(a, x), a1, a2)
    assert abs(S_dd(a1, a2, x) - float(ref)) <= 1e-13 * (1 + abs(float(ref)))


@pytest.mark.parametrize("x,theta,rho", [(1.1, 0.6, 1.7), (np.pi, 1.0, 2.0), (np.pi, 3.0, 3.0),
                                         (0.4, 0.0, 0.0), (2.5, 7.0, 7.0 + 1e-8)])
def test_cos_product_integral(x, theta, rho):
    ref = float(mp_cos_product(x, theta, rho))
    assert abs(cos_product_integral(x, theta, rho) - ref) <= 1e-13 * (1 + abs(ref))


def test_cos_product_orthogonality_on_model():
    n = np.arange(6.0)
    D = cos_product_integral(np.pi, n[:, None], n[None, :])
    expect = np.diag(np.where(n == 0, np.pi, np.pi / 2))
    assert np.allclose(D, expect, atol=1e-14)


@pytest.mark.parametrize("x,theta,rho", [(1.1, 0.6, 1.7), (np.pi, 1.0, 2.0), (0.5, 0.0, 3.0),
                                         (2.0, 0.0, 0.0), (3.0, 4.0, 4.0 + 1e-9)])
def test_sin_product_integral(x, theta, rho):
    ref = float(mp_sin_product(x, theta, rho))
    assert abs(sin_product_integral(x, theta, rho) - ref) <= 1e-12 * (1 + abs(ref))


def test_sin_product_zero_spot_value():
    # int_0^pi sin t sin 2t dt = 0
    assert abs(sin_product_integral(np.pi, 1.0, 2.0)) < 1e-15


@pytest.mark.parametrize("x,theta,r1,r2", [(1.1, 0.6, 1.7, 1.2), (np.pi, 2.0, 2.0, 2.0 + 1e-6),
                                           (2.0, 0.5, 0.5 + 1e-4, 0.5 - 1e-4), (3.0, 0.0, 1e-5, 2e-5),
                                           (np.pi, 6.0, 6.3, 5.7)])
def test_Wsin_quotient(x, theta, r1, r2):
    ref = mp_quotient(lambda r: mp_sin_product(x, theta, r), r1, r2)
    assert abs(Wsin(x, theta, r1, r2) - float(ref)) <= 1e-12 * (1 + abs(float(ref)))


@pytest.mark.parametrize("x,theta,r1,r2", [(1.1, 0.6, 1.7, 1.2), (np.pi, 2.0, 2.0, 2.0 + 1e-6),
                                           (2.0, 0.5, 0.5 + 1e-4, 0.5 - 1e-4), (np.pi, 6.0, 6.3, 5.7)])
def test_Wtilde_quotient(x, theta, r1, r2):
    ref = mp_quotient(lambda r: mp_cos_product(x, theta, r), r1, r2)
    assert abs(Wtilde(x, theta, r1, r2) - float(ref)) <= 1e-13 * (1 + abs(float(ref)))


def test_wtilde_and_derivatives_by_difference():
    x, r, rt = 1.3, 2.2, 2.0
    assert abs(wtilde(x, r, rt) - (np.cos(r * x) - np.cos(rt * x)) / (r - rt)) < 1e-14
    e = 1e-6
    fd = (wtilde(x + e, r, rt) - wtilde(x - e, r, rt)) / (2 * e)
    assert abs(wtilde_dx(x, r, rt) - fd) < 1e-8
    fd = (Wtilde(x + e, 0.7, r, rt) - Wtilde(x - e, 0.7, r, rt)) / (2 * e)
    assert abs(Wtilde_dx(x, 0.7, r, rt) - fd) < 1e-8


@settings(max_examples=60, deadline=None)
@given(st.floats(-20, 20, **finite), st.floats(1e-12, 1e-3), st.floats(0.05, np.pi))
def test_S_dd_continuous_across_branches(a, eps, x):
    # the value at a1 = a2 is the derivative; nearby quotients approach it
    d0 = S_dd(a, a, x)
    d1 = S_dd(a + eps, a, x)
    assert abs(d1 - d0) <= 2 * eps * x ** 3 + 1e-12


@settings(max_examples=60, deadline=None)
@given(st.floats(-15, 15, **finite), st.floats(-15, 15, **finite), st.floats(0.0, np.pi))
def test_S_dd_symmetric(a1, a2, x):
    assert S_dd(a1, a2, x) == pytest.approx(S_dd(a2, a1, x), abs=1e-14)


@settings(max_examples=60, deadline=None)
@given(st.floats(-10, 10, **finite), st.floats(-10, 10, **finite), st.floats(0.0, np.pi))
def test_cos_product_symmetric_and_bounded(t, r, x):
    v = cos_product_integral(x, t, r)
    assert v == pytest.approx(cos_product_integral(x, r, t), abs=1e-13)
    assert abs(v) <= x + 1e-13


@settings(max_examples=40, deadline=None)
@given(st.floats(-30, 30, **finite))
def test_sinc_and_sin_over(z):
    assert abs(sinc(z)) <= 1.0 + 1e-15
    assert sin_over(z, 1.0) == pytest.approx(np.sin(z) / z if z != 0 else 1.0, abs=1e-15)


def test_model_data_gives_zero_operator():
    d = model_data(6, 2)
    sysx = assemble(0.8, d, derivative=True)
    assert np.max(np.abs(sysx.R)) < 1e-15
    assert np.max(np.abs(sysx.dR)) < 1e-15
    assert np.max(np.abs(xi_sequence(d))) < 1e-15


def test_system_matrix_layout():
    d = model_data(3, 2)
    A = assemble(0.5, d).matrix()
    assert A.shape == (3 * 3 * 2, 3 * 3 * 2)
