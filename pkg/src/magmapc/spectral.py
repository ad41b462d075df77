"""Dense spectral checks of the block preconditioners on small meshes.

Both the theoretical and the practical lower-triangular preconditioner have
K in their (1,1) block, so the preconditioned operator is block upper
triangular with an identity velocity block.  Its eigenvalues are therefore
n_u copies of 1 together with the eigenvalues of a pressure-space pencil

    H = [[-C - S_eta, -S_eta], [-S_eta, -Q_zeta - S_eta]],  S_eta = G K^-1 G^T,

against the pressure blocks of the preconditioner.  Working with this
reduced pencil avoids the Jordan blocks that the full pencil carries at
eigenvalue 1, which limit a full dense eigensolve to roughly the square
root of machine precision.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .assembly import BlockSystem3, pressure_mass
from .linalg import DENSE_SIZE_CAP, complement_basis, dense_generalized_eigenvalues, factorize
from .precond import practical_blocks, theoretical_blocks


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    n_velocity_ones: int
    clusters: dict = field(default_factory=dict)
    radius: float = np.nan
    extremes: tuple[float, float] = (np.nan, np.nan)

    @property
    def count(self) -> int:
        return self.n_velocity_ones + self.eigenvalues.size


def schur_complement(sys: BlockSystem3) -> np.ndarray:
    """Dense S_eta = G K_eta^-1 G^T via a sparse factorization of K_eta."""
    fK = factorize(sys.K, "cholesky-spd")
    GT = sys.G.T.toarray()
    Se = sys.G @ fK.solve(GT)
    return 0.5 * (Se + Se.T)


def _reduced_operator(sys: BlockSystem3, Se: np.ndarray) -> np.ndarray:
    C = sys.C.toarray()
    Qz = sys.Q_zeta.toarray()
    return np.block([[-C - Se, -Se], [-Se, -Qz - Se]])


def _first_block_constant(n_p: int) -> np.ndarray:
    v = np.zeros(2 * n_p)
    v[:n_p] = 1.0
    return v


def _cluster(w: np.ndarray, centres) -> tuple[dict, float]:
    centres = np.asarray(centres, dtype=float)
    dist = np.abs(w[:, None] - centres[None, :])
    nearest = np.argmin(dist, axis=1)
    counts = {float(c): int(np.sum(nearest == i)) for i, c in enumerate(centres)}
    radius = float(np.max(dist[np.arange(w.size), nearest])) if w.size else 0.0
    return counts, radius


def theoretical_spectrum(sys: BlockSystem3, sigma: float) -> SpectrumReport:
    """Eigenvalues of (A, P) for the theoretical preconditioner, after deflating [0, 1, 0].

    Expected: exactly the two values 1 and ``sigma``.
    """
    b = theoretical_blocks(sys, sigma)
    n_u, n_p, _ = sys.sizes
    H = _reduced_operator(sys, b["schur"])
    Z0 = np.zeros((n_p, n_p))
    Ppp = np.block([[b["R"], Z0], [b["T"], b["S"]]])
    Z = complement_basis(_first_block_constant(n_p), 2 * n_p)
    w = sla.eig(Z.T @ H @ Z, Z.T @ Ppp @ Z, right=False)
    if np.max(np.abs(w.imag)) > 1e-8 * max(1.0, np.max(np.abs(w.real))):
        raise ArithmeticError("theoretical spectrum has a complex part")
    w = np.sort(w.real)
    counts, radius = _cluster(w, [1.0, sigma])
    counts[1.0] += n_u
    return SpectrumReport(w, n_u, counts, radius, (min(w.min(), 1.0), max(w.max(), 1.0)))


def full_pencil_eigenvalues(sys: BlockSystem3, sigma: float,
                            size_cap: int = DENSE_SIZE_CAP) -> np.ndarray:
    """Cross-check: eigenvalues of the full deflated pencil (A, P_theoretical).

    Eigenvalue 1 is defective here, so agreement is only to about 1e-7.
    """
    from .precond import build_theoretical, dense_matrix
    pc = build_theoretical(sys, sigma)
    A = sys.matrix()
    n_u, n_p, _ = sys.sizes
    null = np.zeros(A.shape[0])
    null[n_u:n_u + n_p] = 1.0
    return dense_generalized_eigenvalues(A, dense_matrix(pc), null_vectors=null,
                                         size_cap=size_cap)


def unit_eigenvector_pressure_fraction(sys: BlockSystem3, sigma: float,
                                       rank_tol: float = 1e-9) -> tuple[float, int]:
    """Size of the pressure parts of the eigenvalue-1 eigenvectors of (A, P_theoretical).

    The eigenvectors for eigenvalue 1 form the null space of A - P.  Besides
    the velocity vectors [u, 0, 0] it contains the constant compaction
    pressure [0, 0, 1] (the two pressure averages are not tied together by
    the deflation), which is projected out before measuring.  Returns the
    spectral norm of the pressure rows of the remaining orthonormal basis and
    the null-space dimension.
    """
    from .precond import build_theoretical, dense_matrix
    pc = build_theoretical(sys, sigma)
    A = sys.matrix().toarray()
    n_u, n_p, _ = sys.sizes
    n = A.shape[0]
    null = np.zeros(n)
    null[n_u:n_u + n_p] = 1.0
    Z = complement_basis(null, n)
    M = Z.T @ (A - dense_matrix(pc)) @ Z
    _, s, Vt = np.linalg.svd(M)
    k = int(np.sum(s <= rank_tol * s[0]))
    X = Z @ Vt[-k:].T if k else np.zeros((n, 0))
    ec = np.zeros(n)
    ec[n_u + n_p:] = 1.0 / np.sqrt(n_p)
    X = X - np.outer(ec, ec @ X)
    U, sv, _ = np.linalg.svd(X, full_matrices=False)
    X = U[:, sv > 0.5]  # orthonormal basis of the projected space
    frac = float(np.linalg.norm(X[n_u:], 2)) if X.size else 0.0
    return frac, k


def triangular_spectrum(sys: BlockSystem3, blocks: dict) -> SpectrumReport:
    """Eigenvalues of P_t^-1 A for the practical lower-triangular preconditioner (T = 0).

    The pressure pencil (-H, bdiag(-R, -S)) is symmetric with an SPD right
    side, so the spectrum is real; the constant fluid pressure is removed in
    the metric of the right side.
    """
    n_u, n_p, _ = sys.sizes
    pb = practical_blocks(sys, blocks)
    H = _reduced_operator(sys, schur_complement(sys))
    B = sla.block_diag(pb["minus_R"].toarray(), pb["minus_S"].toarray())
    w = dense_generalized_eigenvalues(-H, B, null_vectors=_first_block_constant(n_p),
                                      symmetric=True)
    w = np.sort(w)
    return SpectrumReport(w, n_u, {}, np.nan, (min(w.min(), 1.0), max(w.max(), 1.0)))


def triangular_spectrum_dense(sys: BlockSystem3, blocks: dict,
                              size_cap: int = DENSE_SIZE_CAP) -> np.ndarray:
    """Cross-check of :func:`triangular_spectrum` through the full dense pencil.

    P_t is invertible, so no deflation is needed: the constant fluid pressure
    shows up as a single zero eigenvalue, which is dropped.  (An orthogonal
    deflation would not be exact here because [0, 1, 0] is not a left null
    vector of P_t.)
    """
    n_u, n_p, _ = sys.sizes
    pb = practical_blocks(sys, blocks)
    K, G = sys.K.toarray(), sys.G.toarray()
    R, S = -pb["minus_R"].toarray(), -pb["minus_S"].toarray()
    Z0 = np.zeros
    P = np.block([[K, Z0((n_u, n_p)), Z0((n_u, n_p))],
                  [G, R, Z0((n_p, n_p))],
                  [G, Z0((n_p, n_p)), S]])
    w = dense_generalized_eigenvalues(sys.matrix(), P, size_cap=size_cap)
    return np.delete(w, np.argmin(np.abs(w)))


def schur_mass_eigenvalues(sys: BlockSystem3) -> np.ndarray:
    """Generalized eigenvalues of (G K^-1 G^T, Q) on the mean-free pressure space."""
    Q = pressure_mass(sys.spaces.mesh, sys.spaces, sys.geometry)
    n_p = Q.shape[0]
    w = dense_generalized_eigenvalues(schur_complement(sys), Q, null_vectors=np.ones(n_p),
                                      symmetric=True)
    return np.sort(w)
