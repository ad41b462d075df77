"""Manufactured solutions for the constant and variable viscosity test cases.

Both cases share the velocity ``u = k grad p + w`` with a solenoidal ``w``
plus the constant 2, and ``p = -cos(4 pi x) cos(2 pi z)``.  The momentum
source is obtained by applying the three-field operator to the closed forms;
derivatives are written out by hand and checked against finite differences
in the test suite.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import DegenerateModelError
from .coefficients import (CoefficientModel, ConstitutiveParams, alpha_model,
                           permeability_jet, porosity_jet, porosity_model)
from .mesh import on_boundary

PI = math.pi


def pressure_jet(x, z):
    """p with gradient, Hessian and third derivatives.

    Third derivatives are returned as (xxx, xxz, xzz, zzz).
    """
    a, b = 4 * PI, 2 * PI
    cx, sx = np.cos(a * x), np.sin(a * x)
    cz, sz = np.cos(b * z), np.sin(b * z)
    p = -cx * cz
    grad = (a * sx * cz, b * cx * sz)
    hess = (a * a * cx * cz, -a * b * sx * sz, b * b * cx * cz)
    third = (-a**3 * sx * cz, -a * a * b * cx * sz, -a * b * b * sx * cz, -b**3 * cx * sz)
    return p, grad, hess, third


def solenoidal_jet(x, z):
    """w = (sin(pi x) sin(2 pi z) + 2, cos(pi x) cos(2 pi z) / 2 + 2).

    Returns w, dw[i][j] = d_j w_i and d2w[i][j][l] = d_j d_l w_i.
    """
    sx, cx = np.sin(PI * x), np.cos(PI * x)
    s2, c2 = np.sin(2 * PI * z), np.cos(2 * PI * z)
    w = (sx * s2 + 2.0, 0.5 * cx * c2 + 2.0)
    dw = ((PI * cx * s2, 2 * PI * sx * c2),
          (-0.5 * PI * sx * c2, -PI * cx * s2))
    d2w = (((-PI**2 * sx * s2, 2 * PI**2 * cx * c2), (2 * PI**2 * cx * c2, -4 * PI**2 * sx * s2)),
           ((-0.5 * PI**2 * cx * c2, PI**2 * sx * s2), (PI**2 * sx * s2, -2 * PI**2 * cx * c2)))
    return w, dw, d2w


def _sym(h):
    """(xx, xz, zz) -> 2x2 nested tuple."""
    return ((h[0], h[1]), (h[1], h[2]))


def _third(t):
    """(xxx, xxz, xzz, zzz) -> T[i][j][l]."""
    xxx, xxz, xzz, zzz = t
    return (((xxx, xxz), (xxz, xzz)), ((xxz, xzz), (xzz, zzz)))


@dataclass
class _Jets:
    """Everything needed at a batch of points."""
    u: np.ndarray        # (..., 2)
    du: np.ndarray       # (..., 2, 2): du[..., i, j] = d_j u_i
    d2u: np.ndarray      # (..., 2, 2, 2)
    p: np.ndarray
    dp: np.ndarray       # (..., 2)
    d2p: np.ndarray
    pc: np.ndarray
    dpc: np.ndarray      # (..., 2)
    eta: np.ndarray
    deta: np.ndarray     # (..., 2)


def _velocity_jets(kv, kg, kh, x, z):
    p, gp, hp, tp = pressure_jet(x, z)
    w, dw, d2w = solenoidal_jet(x, z)
    H, T = _sym(hp), _third(tp)
    Kh = _sym(kh)
    u = np.stack([kv * gp[i] + w[i] for i in range(2)], axis=-1)
    du = np.stack([np.stack([kg[j] * gp[i] + kv * H[i][j] + dw[i][j] for j in range(2)], -1)
                   for i in range(2)], -2)
    d2u = np.stack([
        np.stack([
            np.stack([Kh[j][l] * gp[i] + kg[j] * H[i][l] + kg[l] * H[i][j] + kv * T[i][j][l]
                      + d2w[i][j][l] for l in range(2)], -1)
            for j in range(2)], -2)
        for i in range(2)], -3)
    return u, du, d2u, p, np.stack(gp, -1), np.stack([np.stack(r, -1) for r in H], -2)


@dataclass
class ExactSolution:
    """Closed-form solution with derived momentum and mass sources."""

    name: str
    coeffs: CoefficientModel
    _jets: Callable = field(repr=False)
    params: dict = field(default_factory=dict)

    def jets(self, x, z) -> _Jets:
        x = np.asarray(x, dtype=float)
        z = np.asarray(z, dtype=float)
        return self._jets(x, z)

    # value evaluators -------------------------------------------------------
    def u(self, x, z):
        return self.jets(x, z).u

    def grad_u(self, x, z):
        return self.jets(x, z).du

    def p(self, x, z):
        return pressure_jet(np.asarray(x, float), np.asarray(z, float))[0]

    def grad_p(self, x, z):
        return self.jets(x, z).dp

    def p_c(self, x, z):
        return self.jets(x, z).pc

    def div_u(self, x, z):
        du = self.jets(x, z).du
        return du[..., 0, 0] + du[..., 1, 1]

    # sources -------------------------------------------------------------------
    def f_momentum(self, x, z):
        J = self.jets(x, z)
        d = J.du[..., 0, 0] + J.du[..., 1, 1]
        grad_d = J.d2u[..., 0, 0, :] + J.d2u[..., 1, 1, :]
        lap_u = J.d2u[..., 0, 0] + J.d2u[..., 1, 1]
        E = 0.5 * (J.du + np.swapaxes(J.du, -1, -2))
        E[..., 0, 0] -= d / 3
        E[..., 1, 1] -= d / 3
        div_E = 0.5 * lap_u + grad_d / 6.0
        div_etaE = np.einsum("...ij,...j->...i", E, J.deta) + J.eta[..., None] * div_E
        return -div_etaE + J.dp + J.dpc

    def g_mass(self, x, z):
        # div u - div(k grad p) = div w, and w is solenoidal
        return np.zeros(np.broadcast(np.asarray(x), np.asarray(z)).shape)


def exact_solution_tc1(k_star: float = 0.5, k_superstar: float = 1.5,
                       alpha: float = 1.0, zeta_floor: float = 0.0) -> ExactSolution:
    """Constant viscosity case: eta = 1, zeta = alpha + 1/3, tanh permeability.

    ``zeta_floor`` is passed to :func:`alpha_model`; the compaction pressure
    is consistent with the floored bulk viscosity.
    """
    coeffs = alpha_model(alpha, k_star, k_superstar, zeta_floor)
    zeta = max(alpha + 1.0 / 3.0, zeta_floor, 0.0)

    def jets(x, z):
        kv, kg, kh = permeability_jet(x, z, k_star, k_superstar)
        u, du, d2u, p, dp, d2p = _velocity_jets(kv, kg, kh, x, z)
        d = du[..., 0, 0] + du[..., 1, 1]
        grad_d = d2u[..., 0, 0, :] + d2u[..., 1, 1, :]
        return _Jets(u, du, d2u, p, dp, d2p, pc=-zeta * d, dpc=-zeta * grad_d,
                     eta=np.ones_like(x), deta=np.zeros(x.shape + (2,)))

    return ExactSolution("tc1", coeffs, jets,
                         dict(k_star=k_star, k_superstar=k_superstar, alpha=alpha,
                              zeta_floor=zeta_floor))


def exact_solution_tc2(params: ConstitutiveParams | None = None, phi_star: float = 1e-3,
                       phi_superstar: float = 0.3,
                       allow_zero_zeta_inv: bool = False) -> ExactSolution:
    """Porosity-dependent case.

    With zeta = r_zeta phi0 / phi the compaction pressure ``-zeta div u`` is
    evaluated as ``-r_zeta phi0 (div u / phi)``, which stays finite where the
    porosity vanishes because div u = div(k grad p) carries a factor phi.
    """
    params = params or ConstitutiveParams()
    coeffs = porosity_model(params, phi_star, phi_superstar, allow_zero_zeta_inv)
    c, m, p0 = params.k_prefactor, params.m, params.phi0
    rp = params.r_zeta * p0
    cutoff = params.zeta_inv_cutoff
    if m < 1:
        raise DegenerateModelError("compaction pressure is unbounded for m < 1")

    def jets(x, z):
        ph, gph, hph = porosity_jet(x, z, phi_star, phi_superstar)
        k0, k1, k2 = (params.k_of_phi(ph, o) for o in range(3))
        kg = tuple(k1 * g for g in gph)
        kh = (k2 * gph[0] ** 2 + k1 * hph[0], k2 * gph[0] * gph[1] + k1 * hph[1],
              k2 * gph[1] ** 2 + k1 * hph[2])
        u, du, d2u, p, dp, d2p = _velocity_jets(k0, kg, kh, x, z)
        _, gp, hp, tp = pressure_jet(x, z)
        lap_p = hp[0] + hp[2]
        grad_lap = np.stack([tp[0] + tp[2], tp[1] + tp[3]], -1)

        # e = div u / phi = kappa2 (grad phi . grad p) + kappa1 lap p
        with np.errstate(divide="ignore", invalid="ignore"):
            kap1 = c * ph ** (m - 1) / p0**m
            dkap1 = c * (m - 1) * ph ** (m - 2) / p0**m if m != 1 else np.zeros_like(ph)
            kap2 = c * m * ph ** (m - 2) / p0**m
            dkap2 = c * m * (m - 2) * ph ** (m - 3) / p0**m if m != 2 else np.zeros_like(ph)
        gphv = np.stack(gph, -1)
        gdot = gph[0] * gp[0] + gph[1] * gp[1]
        Hph, Hp = np.stack([np.stack(r, -1) for r in _sym(hph)], -2), d2p
        grad_gdot = np.einsum("...ij,...j->...i", Hph, dp) + np.einsum("...ij,...j->...i", Hp, gphv)
        e = kap2 * gdot + kap1 * lap_p
        grad_e = ((dkap2 * gdot + dkap1 * lap_p)[..., None] * gphv
                  + kap2[..., None] * grad_gdot + kap1[..., None] * grad_lap)
        pc = -rp * e
        dpc = -rp * grad_e
        if cutoff is not None and cutoff > 0:
            d = du[..., 0, 0] + du[..., 1, 1]
            grad_d = d2u[..., 0, 0, :] + d2u[..., 1, 1, :]
            clipped = ph / rp <= cutoff
            pc = np.where(clipped, -d / cutoff, pc)
            dpc = np.where(clipped[..., None], -grad_d / cutoff, dpc)

        eta = params.eta_of_phi(ph)
        deta = params.eta_of_phi(ph, 1)[..., None] * gphv
        return _Jets(u, du, d2u, p, dp, d2p, pc=pc, dpc=dpc, eta=eta, deta=deta)

    return ExactSolution("tc2", coeffs, jets,
                         dict(phi_star=phi_star, phi_superstar=phi_superstar, params=params))


def dirichlet_data(sol: ExactSolution, x) -> np.ndarray:
    """Exact velocity at boundary points; ``x`` has shape (..., 2)."""
    x = np.asarray(x, dtype=float)
    if not np.all(on_boundary(x, tol=1e-12)):
        raise ValueError("dirichlet_data evaluated away from the boundary")
    return sol.u(x[..., 0], x[..., 1])
