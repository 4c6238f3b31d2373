import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.linalg import expm

from sl2lab import algebra

vec = arrays(np.float64, 3, elements=st.floats(-3, 3))


def commutator(u, v):
    a, b = algebra.to_matrix(u), algebra.to_matrix(v)
    return a @ b - b @ a


# [DERIVED] bracket against the 2x2 matrix commutator
@given(vec, vec)
def test_bracket_matches_matrix_commutator(u, v):
    np.testing.assert_allclose(algebra.to_matrix(algebra.bracket(u, v)), commutator(u, v), atol=1e-12)


# [DERIVED] inner = -tr(uv) computed on matrices
@given(vec, vec)
def test_inner_is_minus_trace(u, v):
    tr = np.trace(algebra.to_matrix(u) @ algebra.to_matrix(v))
    assert algebra.inner(u, v) == pytest.approx(-tr.real, abs=1e-12)
    assert abs(tr.imag) < 1e-12


@given(vec, vec)
def test_complex_trace_pair_restricts_to_minus_inner(u, v):
    assert algebra.complex_trace_pair(u, v) == pytest.approx(-algebra.inner(u, v), abs=1e-12)


def test_basis_relation():  # [TRIVIAL]
    e = np.eye(3)
    np.testing.assert_allclose(algebra.bracket(e[0], e[1]), e[2])
    assert algebra.inner(e[0], e[0]) == 0.5


@given(vec, vec, vec)
def test_jacobi_identity(u, v, w):
    b = algebra.bracket
    total = b(u, b(v, w)) + b(v, b(w, u)) + b(w, b(u, v))
    np.testing.assert_allclose(total, 0, atol=1e-10)


@given(vec, vec, vec)
def test_inner_is_ad_invariant(u, v, w):
    lhs = algebra.inner(algebra.bracket(u, v), w)
    rhs = -algebra.inner(v, algebra.bracket(u, w))
    assert lhs == pytest.approx(rhs, abs=1e-10)


def test_from_matrix_roundtrip(rng):
    u = rng.normal(size=(5, 3))
    np.testing.assert_allclose(algebra.from_matrix(algebra.to_matrix(u)), u, atol=1e-14)


# [DERIVED] quaternion exponential against scipy's matrix exponential
@given(vec)
def test_quat_exp_matches_expm(xi):
    q = algebra.quat_exp(xi)
    assert np.linalg.norm(q) == pytest.approx(1.0, abs=1e-12)
    # unit quaternion w + x e1 + y e2 + z e3 with e_k = 2 tau_k
    m = q[0] * np.eye(2) + algebra.to_matrix(2 * q[1:])
    np.testing.assert_allclose(m, expm(algebra.to_matrix(xi)), atol=1e-10)


@given(vec)
def test_quat_log_inverts_exp(xi):
    if np.linalg.norm(xi) >= 2 * np.pi - 1e-3:
        return
    np.testing.assert_allclose(algebra.quat_log(algebra.quat_exp(xi)), xi, atol=1e-8)


@given(vec, vec)
def test_adjoint_matches_conjugation(xi, u):
    q = algebra.quat_exp(xi)
    g = expm(algebra.to_matrix(xi))
    expected = g @ algebra.to_matrix(u) @ np.linalg.inv(g)
    np.testing.assert_allclose(algebra.to_matrix(algebra.adjoint(q, u)), expected, atol=1e-10)


@given(vec, vec)
def test_quat_mul_is_matrix_product(x, y):
    p, q = algebra.quat_exp(x), algebra.quat_exp(y)
    prod = algebra.quat_mul(p, q)
    m = lambda r: r[0] * np.eye(2) + algebra.to_matrix(2 * r[1:])  # noqa: E731
    np.testing.assert_allclose(m(prod), m(p) @ m(q), atol=1e-12)


def test_quat_conj_is_inverse(rng):
    q = algebra.quat_normalize(rng.normal(size=(4, 4)))
    np.testing.assert_allclose(algebra.quat_mul(q, algebra.quat_conj(q)), algebra.quat_identity((4,)), atol=1e-14)


def test_rotation_is_orthogonal(rng):
    q = algebra.quat_normalize(rng.normal(size=4))
    R = algebra.quat_to_rotation(q)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-14)
    assert np.linalg.det(R) == pytest.approx(1.0)
