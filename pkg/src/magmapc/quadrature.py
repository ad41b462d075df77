"""Quadrature rules and Lagrange basis tabulation on the reference triangle."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray   # barycentric coordinates (nq, 3)
    weights: np.ndarray  # sum to 1/2, the reference triangle area
    degree: int

    @property
    def ref_points(self) -> np.ndarray:
        """Cartesian coordinates on the reference triangle (0,0), (1,0), (0,1)."""
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def strang_fix_7() -> QuadratureRule:
    """Symmetric 7-point rule, exact for polynomials of degree 5."""
    s15 = np.sqrt(15.0)
    a1, a2 = (6 - s15) / 21, (6 + s15) / 21
    w1, w2 = (155 - s15) / 1200, (155 + s15) / 1200
    pts = [(1 / 3, 1 / 3, 1 / 3)]
    wts = [9 / 40]
    for a, w in ((a1, w1), (a2, w2)):
        b = 1 - 2 * a
        pts += [(b, a, a), (a, b, a), (a, a, b)]
        wts += [w] * 3
    return QuadratureRule(np.array(pts), 0.5 * np.array(wts), 5)


@lru_cache(maxsize=None)
def collapsed_gauss(n: int) -> QuadratureRule:
    """Duffy-collapsed tensor Gauss rule with n^2 points, exact to degree 2n - 2."""
    g, w = np.polynomial.legendre.leggauss(n)
    t, wt = 0.5 * (g + 1), 0.5 * w
    xi = t[:, None] * np.ones(n)[None, :]
    eta = (1 - t[:, None]) * t[None, :]
    wts = (wt[:, None] * wt[None, :]) * (1 - t[:, None])
    xi, eta, wts = xi.ravel(), eta.ravel(), wts.ravel()
    bary = np.column_stack([1 - xi - eta, xi, eta])
    return QuadratureRule(bary, wts, 2 * n - 2)


def p1_basis(bary: np.ndarray):
    """P1 values (nq, 3) and reference gradients (3, 2)."""
    grads = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    return bary.copy(), grads


def p2_basis(bary: np.ndarray):
    """P2 values (nq, 6) and reference gradients (nq, 6, 2).

    Vertex functions first, then edge functions for the edges opposite
    vertices 0, 1, 2.
    """
    L = bary
    dL = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    vals = np.empty((L.shape[0], 6))
    grads = np.empty((L.shape[0], 6, 2))
    for i in range(3):
        vals[:, i] = L[:, i] * (2 * L[:, i] - 1)
        grads[:, i] = (4 * L[:, i] - 1)[:, None] * dL[i]
    for e, (a, b) in enumerate(((1, 2), (2, 0), (0, 1))):
        vals[:, 3 + e] = 4 * L[:, a] * L[:, b]
        grads[:, 3 + e] = 4 * (L[:, a][:, None] * dL[b] + L[:, b][:, None] * dL[a])
    return vals, grads
