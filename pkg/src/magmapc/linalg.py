"""Sparse direct factorizations and small dense eigenvalue solvers."""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.io
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import SingularMatrixError

DENSE_SIZE_CAP = 6000


class NotPositiveDefiniteError(SingularMatrixError):
    """Raised by the Cholesky path when a pivot is not positive."""


@dataclass
class SparseFactorization:
    """A reusable LU (or symmetric-mode LDL^T) factorization."""

    kind: str
    n: int
    _lu: spla.SuperLU

    def solve(self, b: np.ndarray) -> np.ndarray:
        return self._lu.solve(np.asarray(b, dtype=float))

    __call__ = solve

    @property
    def fill(self) -> int:
        return self._lu.L.nnz + self._lu.U.nnz


def factorize(A, kind: str = "lu-general", pivot_tol: float = 1e-14) -> SparseFactorization:
    """Factorize a square sparse matrix with a minimum-degree fill-reducing ordering.

    ``kind="cholesky-spd"`` runs SuperLU in symmetric mode without pivoting,
    so the diagonal of U holds the LDL^T pivots; a non-positive pivot means
    the input is not SPD and raises :class:`NotPositiveDefiniteError`.
    """
    A = sp.csc_matrix(A, dtype=float)
    n, m = A.shape
    if n != m:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if kind not in ("lu-general", "cholesky-spd"):
        raise ValueError(f"unknown factorization kind {kind!r}")
    spd = kind == "cholesky-spd"
    if spd:
        asym = abs(A - A.T)
        scale = abs(A).max() if A.nnz else 0.0
        if asym.nnz and asym.max() > 1e-10 * scale:
            raise NotPositiveDefiniteError("matrix is not symmetric")
    try:
        if spd:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A", diag_pivot_thresh=0.0,
                           options=dict(SymmetricMode=True))
        else:
            lu = spla.splu(A, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        piv = _locate_singular_pivot(A)
        raise SingularMatrixError(f"factorization failed: {exc}", pivot=piv) from exc

    d = lu.U.diagonal()
    scale = np.max(np.abs(d)) if d.size else 1.0
    if spd:
        bad = np.flatnonzero(d <= pivot_tol * scale)
        if bad.size:
            piv = int(lu.perm_c[bad[0]])
            raise NotPositiveDefiniteError(
                f"non-positive pivot {d[bad[0]]:.3e} at row {piv}", pivot=piv)
    else:
        bad = np.flatnonzero(np.abs(d) <= pivot_tol * scale)
        if bad.size:
            piv = int(lu.perm_c[bad[0]])
            raise SingularMatrixError(f"numerically singular pivot at row {piv}", pivot=piv)
    return SparseFactorization(kind, n, lu)


def _locate_singular_pivot(A: sp.csc_matrix) -> int | None:
    """Best-effort row index of a vanishing pivot after SuperLU gave up."""
    empty = np.flatnonzero(np.diff(A.indptr) == 0)  # empty columns
    if empty.size == 0:
        empty = np.flatnonzero(np.diff(A.tocsr().indptr) == 0)
    if empty.size:
        return int(empty[0])
    if A.shape[0] > DENSE_SIZE_CAP:
        return None
    P, _, U = sla.lu(A.toarray())
    d = np.abs(np.diag(U))
    bad = np.flatnonzero(d <= 1e-14 * max(d.max(), 1.0))
    return int(np.argmax(P[:, bad[0]])) if bad.size else None


def complement_basis(null_vectors, n: int, metric=None) -> np.ndarray:
    """Orthonormal basis (n, n - k) of the complement of ``null_vectors``.

    With ``metric`` the complement is taken in the metric's inner product,
    i.e. the columns span {x : v^T metric x = 0}.
    """
    V = np.atleast_2d(np.asarray(null_vectors, dtype=float))
    if V.shape[0] != n:
        V = V.T
    W = V if metric is None else np.asarray(metric @ V)
    Q, _ = np.linalg.qr(W, mode="complete")
    return Q[:, W.shape[1]:]


def dense_generalized_eigenvalues(A, B=None, null_vectors=None, symmetric: bool = False,
                                  size_cap: int = DENSE_SIZE_CAP,
                                  return_vectors: bool = False):
    """Eigenvalues of A x = lambda B x, after deflating common null vectors.

    The pencil is restricted to the complement Z of the null vectors on both
    sides, (Z^T A Z, Z^T B Z).  For ``symmetric=True`` B must be SPD on the
    complement and the B-orthogonal complement is used instead.
    """
    A = A.toarray() if sp.issparse(A) else np.asarray(A, dtype=float)
    n = A.shape[0]
    if n > size_cap:
        raise ValueError(f"dense eigenvalue problem of size {n} exceeds cap {size_cap}")
    if B is None:
        B = np.eye(n)
    B = B.toarray() if sp.issparse(B) else np.asarray(B, dtype=float)
    Z = None
    if null_vectors is not None:
        Z = complement_basis(null_vectors, n, metric=B if symmetric else None)
        A = Z.T @ A @ Z
        B = Z.T @ B @ Z
    if symmetric:
        A = 0.5 * (A + A.T)
        B = 0.5 * (B + B.T)
        w, V = sla.eigh(A, B)
    else:
        w, V = sla.eig(A, B)
    if Z is not None and return_vectors:
        V = Z @ V
    return (w, V) if return_vectors else w


def read_matrix_market(path: str | Path):
    """Matrix Market import; column vectors come back as 1-D arrays."""
    M = scipy.io.mmread(str(path))
    if sp.issparse(M):
        return M.tocsr()
    M = np.asarray(M)
    return M.ravel() if M.ndim == 2 and M.shape[1] == 1 else M
