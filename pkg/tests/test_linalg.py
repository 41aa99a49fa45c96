import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from lindlearn import linalg as la

from conftest import random_hermitian

finite = st.floats(-10, 10, allow_nan=False, allow_infinity=False)
square3 = arrays(np.float64, (3, 3), elements=finite)


def test_kron_shape_and_values():
    a = np.array([[1, 2], [3, 4]])
    b = np.eye(2)
    k = la.kron(a, b)
    assert k.shape == (4, 4)
    assert k[0, 0] == 1 and k[2, 0] == 3 and k[2, 2] == 4 and k[0, 1] == 0


def test_commutator_pauli():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    sy = np.array([[0, -1j], [1j, 0]])
    sz = np.diag([1.0, -1.0]).astype(complex)
    np.testing.assert_allclose(la.commutator(sx, sy), 2j * sz)
    np.testing.assert_allclose(la.anticommutator(sx, sx), 2 * np.eye(2))


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        la.commutator(np.eye(2), np.eye(3))
    with pytest.raises(ValueError):
        la.trace(np.ones((2, 3)))


@given(square3, square3)
def test_commutator_antisymmetric(a, b):
    np.testing.assert_allclose(la.commutator(a, b), -la.commutator(b, a), atol=1e-9)


@given(square3, square3)
def test_trace_of_commutator_vanishes(a, b):
    assert abs(la.trace(la.commutator(a, b))) < 1e-8


def test_frobenius_inner_and_adjoint(rng):
    a = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    b = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
    assert np.isclose(la.frobenius_inner(a, b), np.trace(a.conj().T @ b))
    np.testing.assert_array_equal(la.adjoint(a), a.conj().T)


def test_is_hermitian(rng):
    h = random_hermitian(4, rng)
    assert la.is_hermitian(h)
    assert not la.is_hermitian(h + 1e-6 * np.triu(np.ones((4, 4)), 1))


def test_expm_matches_scipy_and_unitary(rng):
    h = random_hermitian(4, rng)
    u = la.expm(-1j * h)
    np.testing.assert_allclose(u, scipy.linalg.expm(-1j * h), atol=1e-12)
    np.testing.assert_allclose(u @ u.conj().T, np.eye(4), atol=1e-12)
    np.testing.assert_allclose(la.expm(np.zeros((3, 3))), np.eye(3))


def test_eig_general_reconstructs(rng):
    m = rng.normal(size=(6, 6))
    dec = la.eig_general(m)
    recon = dec.right @ np.diag(dec.eigenvalues) @ np.linalg.inv(dec.right)
    np.testing.assert_allclose(recon, m, atol=1e-10)
    # biorthonormal left vectors
    np.testing.assert_allclose(dec.left.conj().T @ dec.right, np.eye(6), atol=1e-9)


def test_eig_general_defective_raises():
    jordan = np.array([[1.0, 1.0], [0.0, 1.0]])
    with pytest.raises(la.DefectiveMatrixError):
        la.eig_general(jordan)


def test_eig_general_size_limit():
    with pytest.raises(ValueError):
        la.eig_general(np.eye(la.MAX_EIG_DIM + 1))


@settings(max_examples=25)
@given(st.integers(2, 5), st.integers(0, 2**31 - 1))
def test_eig_hermitian_real_spectrum(d, seed):
    h = random_hermitian(d, np.random.default_rng(seed))
    dec = la.eig_general(h)
    assert np.max(np.abs(dec.eigenvalues.imag)) < 1e-8


def test_kron_identity_and_shapes():
    np.testing.assert_array_equal(la.kron(np.eye(2), np.eye(2)), np.eye(4))
    assert la.kron(np.ones((2, 3)), np.ones((4, 5))).shape == (8, 15)


def test_commutator_self_and_trace_identity():
    a = np.arange(9.0).reshape(3, 3)
    np.testing.assert_array_equal(la.commutator(a, a), np.zeros((3, 3)))
    assert la.trace(np.eye(5)) == 5


def _taylor_expm(m, order=30):
    out = np.eye(len(m), dtype=complex)
    term = np.eye(len(m), dtype=complex)
    for k in range(1, order + 1):
        term = term @ m / k
        out = out + term
    return out


def test_expm_against_taylor_oracle():
    sx = np.array([[0, 1], [1, 0]], dtype=complex)
    m = -1j * np.pi * sx / 2
    np.testing.assert_allclose(la.expm(m), -1j * sx, atol=1e-12)
    np.testing.assert_allclose(la.expm(m), _taylor_expm(m), atol=1e-12)
    np.testing.assert_allclose(la.expm(np.diag([0.3, -1.2])), np.diag(np.exp([0.3, -1.2])), atol=1e-14)


def test_eig_diagonal():
    dec = la.eig_general(np.diag([1.0, 2.0, 3.0]))
    order = np.argsort(dec.eigenvalues.real)
    np.testing.assert_allclose(dec.eigenvalues[order], [1, 2, 3])
    np.testing.assert_allclose(np.abs(dec.right[:, order]), np.eye(3), atol=1e-14)
