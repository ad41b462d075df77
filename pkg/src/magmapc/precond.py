"""Block preconditioners for the three-field and two-field systems.

Every preconditioner exposes ``apply(r)``, the action of its inverse, and is
immutable once built.  Inner block solves use sparse direct factorizations.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import BlockSystem2, BlockSystem3
from .linalg import DENSE_SIZE_CAP, factorize

KINDS = ("theoretical", "lower", "upper", "diagonal", "two-field")


@dataclass
class PreconditionerInstance:
    kind: str
    sizes: tuple[int, ...]
    _apply: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    blocks: dict = field(default_factory=dict, repr=False)
    sigma: float | None = None

    @property
    def n(self) -> int:
        return int(sum(self.sizes))

    def apply(self, r: np.ndarray) -> np.ndarray:
        return self._apply(np.asarray(r, dtype=float))

    __call__ = apply

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.n, self.n), matvec=self.apply, dtype=float)

    @property
    def symmetric_positive(self) -> bool:
        return self.kind in ("diagonal", "two-field")


def _split(r, sizes):
    out, o = [], 0
    for s in sizes:
        out.append(r[o:o + s])
        o += s
    return out


def practical_blocks(sys: BlockSystem3, blocks: dict) -> dict:
    """-R and -S of the practical preconditioners from the assembled blocks.

    ``blocks`` holds either the variable-coefficient pair ``Q_eta``/``Q_eta_zeta``
    or a constant-coefficient description ``{"Q": mass, "eta": .., "zeta": ..}``
    (in which case ``C`` is taken from the system, already scaled by k).
    """
    if "Q_eta" in blocks:
        minus_R = (blocks["Q_eta"] + sys.C).tocsr()
        minus_S = blocks["Q_eta_zeta"].tocsr()
    else:
        Q, eta, zeta = blocks["Q"], blocks["eta"], blocks["zeta"]
        minus_R = (Q / eta + sys.C).tocsr()
        minus_S = ((0.5 / eta + 1.0 / zeta) * Q).tocsr()
    return {"minus_R": minus_R, "minus_S": minus_S}


def build_practical_triangular(sys: BlockSystem3, blocks: dict,
                               orientation: str = "lower") -> PreconditionerInstance:
    """Block triangular preconditioner with K_eta, R = -(Q_eta + C_k), S = -Q_eta^zeta, T = 0."""
    if orientation not in ("lower", "upper"):
        raise ValueError(f"orientation must be 'lower' or 'upper', got {orientation!r}")
    pb = practical_blocks(sys, blocks)
    fK = factorize(sys.K, "cholesky-spd")
    fR = factorize(pb["minus_R"], "cholesky-spd")
    fS = factorize(pb["minus_S"], "cholesky-spd")
    G, Gt = sys.G, sys.G.T.tocsr()
    sizes = sys.sizes

    if orientation == "lower":
        def apply(r):
            ru, rp, rc = _split(r, sizes)
            u = fK.solve(ru)
            Gu = G @ u
            p = -fR.solve(rp - Gu)
            pc = -fS.solve(rc - Gu)
            return np.concatenate([u, p, pc])
    else:
        def apply(r):
            ru, rp, rc = _split(r, sizes)
            p = -fR.solve(rp)
            pc = -fS.solve(rc)
            u = fK.solve(ru - Gt @ (p + pc))
            return np.concatenate([u, p, pc])

    return PreconditionerInstance(orientation, sizes, apply,
                                  blocks=dict(K_factor=fK, minus_R_factor=fR, minus_S_factor=fS, G=G, **pb))


def build_block_diagonal(sys: BlockSystem3, blocks: dict) -> PreconditionerInstance:
    """SPD preconditioner bdiag(K_eta, Q_eta + C_k, Q_eta^zeta) for MINRES."""
    pb = practical_blocks(sys, blocks)
    fK = factorize(sys.K, "cholesky-spd")
    fR = factorize(pb["minus_R"], "cholesky-spd")
    fS = factorize(pb["minus_S"], "cholesky-spd")
    sizes = sys.sizes

    def apply(r):
        ru, rp, rc = _split(r, sizes)
        return np.concatenate([fK.solve(ru), fR.solve(rp), fS.solve(rc)])

    return PreconditionerInstance("diagonal", sizes, apply,
                                  blocks=dict(K_factor=fK, minus_R_factor=fR, minus_S_factor=fS, **pb))


def build_two_field_diagonal(sys: BlockSystem2, blocks: dict) -> PreconditionerInstance:
    """bdiag(Ktilde_eta, Q_eta + C_k) for the two-field system."""
    Q_eta = blocks["Q_eta"] if "Q_eta" in blocks else blocks["Q"] / blocks.get("eta", 1.0)
    minus_R = (Q_eta + sys.C).tocsr()
    fK = factorize(sys.Ktilde, "cholesky-spd")
    fR = factorize(minus_R, "cholesky-spd")
    sizes = sys.sizes

    def apply(r):
        ru, rp = _split(r, sizes)
        return np.concatenate([fK.solve(ru), fR.solve(rp)])

    return PreconditionerInstance("two-field", sizes, apply,
                                  blocks=dict(K_factor=fK, minus_R_factor=fR, minus_R=minus_R))


# -- theoretical (dense) -----------------------------------------------------------

def _check_sigma(sigma: float) -> None:
    if not (sigma < 0 or 0 < sigma < 1):
        raise ValueError(f"sigma must satisfy sigma < 0 or 0 < sigma < 1, got {sigma}")


def theoretical_blocks(sys: BlockSystem3, sigma: float) -> dict[str, np.ndarray]:
    """Dense R, S, T built from the exact Schur complement G K_eta^-1 G^T.

    For constant coefficients ``G K_eta^-1 G^T`` is the scaled ``G K^-1 G^T / eta``,
    ``C_k = k C`` and ``Q_zeta = Q / zeta``.
    """
    _check_sigma(sigma)
    n = sum(sys.sizes)
    if n > DENSE_SIZE_CAP:
        raise ValueError(f"system of size {n} exceeds the dense cap {DENSE_SIZE_CAP}")
    K = sys.K.toarray()
    G = sys.G.toarray()
    C = sys.C.toarray()
    Qz = sys.Q_zeta.toarray()
    Se = G @ np.linalg.solve(K, G.T)
    Se = 0.5 * (Se + Se.T)
    R = -(Se - Se @ np.linalg.solve(Se + Qz, Se) + C) / sigma
    S = -(Se + Qz)
    T = -Se
    return dict(K=K, G=G, C=C, Q_zeta=Qz, schur=Se, R=R, S=S, T=T)


def build_theoretical(sys: BlockSystem3, sigma: float) -> PreconditionerInstance:
    """Dense lower block triangular preconditioner with two-point spectrum {1, sigma}.

    R is singular on the constant pressure; its inverse is applied in the
    least-squares sense.
    """
    b = theoretical_blocks(sys, sigma)
    sizes = sys.sizes
    Kinv_lu = np.linalg.inv(b["K"])
    R_pinv = np.linalg.pinv(b["R"], rcond=1e-12)
    S_inv = np.linalg.inv(b["S"])
    G, T = b["G"], b["T"]

    def apply(r):
        ru, rp, rc = _split(r, sizes)
        u = Kinv_lu @ ru
        Gu = G @ u
        p = R_pinv @ (rp - Gu)
        pc = S_inv @ (rc - Gu - T @ p)
        return np.concatenate([u, p, pc])

    return PreconditionerInstance("theoretical", sizes, apply, blocks=b, sigma=sigma)


def dense_matrix(pc: PreconditionerInstance) -> np.ndarray:
    """The preconditioner P itself (not its inverse) for the theoretical and practical kinds."""
    b = pc.blocks
    nu, np_, _ = pc.sizes
    Z = np.zeros
    if pc.kind == "theoretical":
        K, G, R, S, T = b["K"], b["G"], b["R"], b["S"], b["T"]
        return np.block([[K, Z((nu, np_)), Z((nu, np_))], [G, R, Z((np_, np_))], [G, T, S]])
    raise ValueError("only the theoretical preconditioner keeps its dense blocks")


def build(kind: str, sys, blocks: dict | None = None, sigma: float | None = None):
    """Dispatch on the configuration enum strings."""
    if kind == "theoretical":
        return build_theoretical(sys, 0.5 if sigma is None else sigma)
    if kind in ("lower", "upper"):
        return build_practical_triangular(sys, blocks, kind)
    if kind == "diagonal":
        return build_block_diagonal(sys, blocks)
    if kind == "two-field":
        return build_two_field_diagonal(sys, blocks)
    raise ValueError(f"unknown preconditioner kind {kind!r}; expected one of {KINDS}")
