import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import simpson

from matspec.core import (Coefficients, IndexPair, SpectralData, beta_aggregates, matrix_l2_norm,
                          model_data, opnorm, random_trig_coefficients, require_valid,
                          to_impedance_form, validate_coefficients)
from matspec.errors import ValidationError


def test_zero_problem_is_valid_and_in_class():
    rep = validate_coefficients(Coefficients.zero(2, 50))
    assert rep.valid and rep.in_class_P and rep.omega_norm == 0.0


def test_h_identity_is_outside_class():
    c = Coefficients(np.zeros(51), np.eye(1), np.zeros((1, 1)))
    rep = validate_coefficients(c)
    assert rep.valid and not rep.in_class_P
    assert rep.omega_norm == pytest.approx(1.0)
    with pytest.raises(ValidationError):
        require_valid(c, class_P=True)


def test_cos_potential_is_in_class():
    c = Coefficients.from_function(np.cos, 200)
    assert validate_coefficients(c).in_class_P


def test_non_hermitian_rejected():
    Q = np.zeros((11, 2, 2), dtype=complex)
    Q[:, 0, 1] = 1.0
    with pytest.raises(ValidationError):
        require_valid(Coefficients(Q, np.zeros((2, 2)), np.zeros((2, 2))))


def test_impedance_form_examples():
    H0 = np.array([[1.0, 0.5], [0.5, -2.0]])
    imp = to_impedance_form(Coefficients(np.zeros((21, 2, 2)), np.zeros((2, 2)), H0))
    assert np.all(imp.sigma == 0) and np.allclose(imp.Hcheck, H0)

    c = Coefficients(np.full(41, 3.0), np.zeros((1, 1)), np.zeros((1, 1)))
    assert np.allclose(to_impedance_form(c).sigma[:, 0, 0], 3.0 * c.grid)

    c = Coefficients.from_function(np.cos, 200, h=1.0)
    imp = to_impedance_form(c)
    # Simpson on a 10x finer grid as the reference for sigma(pi/2)
    xf = np.linspace(0, np.pi / 2, 1001)
    ref = 1.0 + simpson(np.cos(xf), x=xf)
    # trapezoid error bound dx^2/12 * max|q'|
    tol = c.dx ** 2 / 12 * 1.01
    assert abs(imp.sigma[100, 0, 0] - ref) < tol
    assert abs(imp.sigma[100, 0, 0] - 2.0) < tol


def test_impedance_differencing_recovers_Q():
    c = Coefficients.from_function(lambda x: np.cos(2 * x), 400)
    s = to_impedance_form(c).sigma[:, 0, 0].real
    mid = (s[1:] - s[:-1]) / c.dx
    xm = c.grid[:-1] + 0.5 * c.dx
    assert np.max(np.abs(mid - np.cos(2 * xm))) < 5 * c.dx ** 2


def test_beta_examples():
    d = SpectralData(np.array([[0.0, 1.0]]), np.array([[[1.0, 0.0], [0.0, 1.0]]]))
    assert np.allclose(d.beta[0, 0], [[1, 0], [0, 0]])
    v = np.array([1.0, 1j]) / np.sqrt(2)
    V = np.zeros((1, 2, 2), dtype=complex)
    V[0, :, 0] = v
    d = SpectralData(np.array([[0.0, 1.0]]), V)
    assert np.allclose(d.beta[0, 0], 0.5 * np.array([[1, -1j], [1j, 1]]))
    md = model_data(3, 2)
    _, Vn, bn = beta_aggregates(md)
    assert np.allclose(bn[1], 2 / np.pi * np.eye(2))
    assert np.allclose(bn, Vn @ np.conj(np.swapaxes(Vn, 1, 2)))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_beta_sum_invariant_under_unitary_mixing(seed):
    rng = np.random.default_rng(seed)
    V = rng.standard_normal((2, 3, 3)) + 1j * rng.standard_normal((2, 3, 3))
    Z = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    U, _ = np.linalg.qr(Z)
    a = SpectralData(np.ones((2, 3)), V)
    b = SpectralData(np.ones((2, 3)), V @ U)
    assert np.allclose(a.beta.sum(axis=1), b.beta.sum(axis=1), atol=1e-12)
    assert np.allclose(a.beta_band, b.beta_band, atol=1e-12)
    # each beta_nk is Hermitian PSD of rank one
    w = np.linalg.eigvalsh(a.beta[0, 0])
    assert w[0] > -1e-12 and w[1] < 1e-12


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(1, 50), st.integers(1, 8)), min_size=1, max_size=30))
def test_index_pair_order(pairs):
    ps = [IndexPair(n, k) for n, k in pairs]
    s = sorted(ps)
    assert sorted(s) == s
    assert [p.as_tuple() for p in s] == sorted(p.as_tuple() for p in ps)


def test_sqrt_branch():
    d = SpectralData(np.array([[-4.0], [9.0]]), np.ones((2, 1, 1)))
    assert d.rho[0, 0] == pytest.approx(2j)
    assert d.rho[1, 0] == pytest.approx(3.0)


@settings(max_examples=20, deadline=None)
@given(st.integers(1, 3), st.integers(0, 1000))
def test_json_round_trips(m, seed):
    c = random_trig_coefficients(m, 16, seed)
    back = Coefficients.from_json(json.loads(json.dumps(c.to_json())))
    assert np.array_equal(back.Q, c.Q) and np.array_equal(back.h, c.h)
    d = model_data(4, m)
    back = SpectralData.from_json(json.loads(json.dumps(d.to_json())))
    assert np.array_equal(back.lam, d.lam) and np.array_equal(back.V, d.V)


def test_random_trig_has_requested_radius():
    c = random_trig_coefficients(2, 200, 7, radius=1.0)
    assert matrix_l2_norm(c.Q, c.dx) == pytest.approx(1.0)
    assert validate_coefficients(c).valid


def test_malformed_json_rejected():
    with pytest.raises(ValidationError):
        Coefficients.from_json({"m": 2, "M": 4})
    with pytest.raises(ValidationError):
        SpectralData.from_json({"m": 1, "bands": [{"n": 2, "lambda": [0.0], "vectors": [[[1, 0]]]}]})


def test_opnorm_is_largest_singular_value():
    A = np.array([[3.0, 0], [0, -4.0]])
    assert opnorm(A) == pytest.approx(4.0)
