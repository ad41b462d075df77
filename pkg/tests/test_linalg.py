import numpy as np
import pytest
import scipy.sparse as sp

from magmapc import SingularMatrixError
from magmapc.linalg import (NotPositiveDefiniteError, complement_basis,
                            dense_generalized_eigenvalues, factorize)


@pytest.mark.parametrize("kind", ["lu-general", "cholesky-spd"])
def test_identity(kind, rng):
    f = factorize(sp.identity(7, format="csr"), kind)
    b = rng.standard_normal(7)
    np.testing.assert_array_equal(f.solve(b), b)


@pytest.mark.parametrize("kind", ["lu-general", "cholesky-spd"])
def test_two_by_two(kind):
    f = factorize(sp.csr_matrix([[2.0, 1.0], [1.0, 2.0]]), kind)
    np.testing.assert_allclose(f.solve(np.array([3.0, 3.0])), [1.0, 1.0], rtol=1e-15)


def test_velocity_block_round_trip(tc1_system_8, rng):
    _, s, _ = tc1_system_8
    f = factorize(s.K, "cholesky-spd")
    b = rng.standard_normal(s.K.shape[0])
    x = f.solve(b)
    assert np.linalg.norm(s.K @ x - b) <= 1e-10 * np.linalg.norm(b)
    assert f.fill >= s.K.nnz // 2


def test_general_lu_round_trip(tc1_system_8, rng):
    _, s, blocks = tc1_system_8
    # a nonsymmetric but nonsingular block operator
    A = sp.bmat([[s.K, s.G.T], [s.G, -(blocks["Q_eta"] + s.C) * 2]], format="csr")
    f = factorize(A)
    b = rng.standard_normal(A.shape[0])
    assert np.linalg.norm(A @ f.solve(b) - b) <= 1e-10 * np.linalg.norm(b)


def test_cholesky_refuses_indefinite():
    A = sp.csr_matrix(np.diag([1.0, 2.0, -3.0, 4.0]))
    with pytest.raises(NotPositiveDefiniteError) as info:
        factorize(A, "cholesky-spd")
    assert info.value.pivot == 2


def test_cholesky_refuses_negated_spd(tc1_system_8):
    _, s, blocks = tc1_system_8
    with pytest.raises(NotPositiveDefiniteError):
        factorize(-(blocks["Q_eta"] + s.C), "cholesky-spd")


def test_cholesky_refuses_nonsymmetric():
    with pytest.raises(NotPositiveDefiniteError):
        factorize(sp.csr_matrix([[2.0, 1.0], [0.0, 2.0]]), "cholesky-spd")


def test_singular_pivot_reported():
    A = sp.csr_matrix(np.array([[1.0, 0, 0], [0, 0, 0], [0, 0, 1.0]]))
    with pytest.raises(SingularMatrixError) as info:
        factorize(A)
    assert info.value.pivot == 1


def test_rejects_bad_input():
    with pytest.raises(ValueError):
        factorize(sp.csr_matrix(np.ones((2, 3))))
    with pytest.raises(ValueError):
        factorize(sp.identity(2), kind="qr")


def test_generalized_eigenvalues_identical_pair(rng):
    B = rng.standard_normal((6, 6))
    B = B @ B.T + 6 * np.eye(6)
    np.testing.assert_allclose(dense_generalized_eigenvalues(B, B, symmetric=True), 1.0, rtol=1e-12)
    np.testing.assert_allclose(np.sort(dense_generalized_eigenvalues(B, B).real), 1.0, rtol=1e-10)


def test_generalized_eigenvalues_diagonal():
    w = dense_generalized_eigenvalues(np.diag([1.0, 2.0]), None, symmetric=True)
    np.testing.assert_allclose(np.sort(w), [1.0, 2.0])


def test_deflation_removes_null_vector():
    # A is singular along the constant vector; B is the identity
    n = 5
    A = np.eye(n) * 3 - np.ones((n, n)) * 3 / n
    w = dense_generalized_eigenvalues(A, np.eye(n), null_vectors=np.ones(n), symmetric=True)
    assert w.size == n - 1
    np.testing.assert_allclose(w, 3.0, rtol=1e-12)


def test_complement_basis_orthogonality(rng):
    v = rng.standard_normal(9)
    Z = complement_basis(v, 9)
    assert Z.shape == (9, 8)
    np.testing.assert_allclose(Z.T @ Z, np.eye(8), atol=1e-13)
    np.testing.assert_allclose(v @ Z, 0.0, atol=1e-13)
    M = np.diag(rng.uniform(1, 2, 9))
    Zm = complement_basis(v, 9, metric=M)
    np.testing.assert_allclose(v @ M @ Zm, 0.0, atol=1e-13)


def test_size_cap():
    with pytest.raises(ValueError, match="cap"):
        dense_generalized_eigenvalues(np.eye(10), np.eye(10), size_cap=5)


def test_numerically_singular_pivot_reported():
    A = sp.csr_matrix(np.array([[1.0, 1.0, 0], [1.0, 1.0, 0], [0, 0, 1.0]]))
    with pytest.raises(SingularMatrixError) as info:
        factorize(A)
    assert info.value.pivot in (0, 1)
