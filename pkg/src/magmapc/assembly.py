"""Sparse assembly of the three-field and two-field block systems.

Velocity uses continuous P2 (components interleaved per node), both
pressures use continuous P1.  Coefficients are sampled at the quadrature
points of the 7-point degree-5 rule.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from . import DegenerateModelError
from .coefficients import CoefficientModel
from .mesh import DofMap, ElementKind, TriMesh, boundary_dofs, build_dofmap
from .quadrature import QuadratureRule, p1_basis, p2_basis, strang_fix_7

log = logging.getLogger(__name__)


# -- geometry ----------------------------------------------------------------------

@dataclass
class CellGeometry:
    """Affine maps of every cell evaluated at one quadrature rule."""

    rule: QuadratureRule
    det: np.ndarray          # (nc,) 2 * signed area
    jinv_t: np.ndarray       # (nc, 2, 2) inverse-transpose Jacobian
    points: np.ndarray       # (nc, nq, 2) physical quadrature points
    wdet: np.ndarray         # (nc, nq) quadrature weight times |det J|
    phi1: np.ndarray         # (nq, 3)
    dphi1: np.ndarray        # (nc, 3, 2)
    phi2: np.ndarray         # (nq, 6)
    dphi2: np.ndarray        # (nc, nq, 6, 2)

    @classmethod
    def build(cls, mesh: TriMesh, rule: QuadratureRule | None = None) -> "CellGeometry":
        rule = rule or strang_fix_7()
        v = mesh.vertices[mesh.cells]
        J = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 0]], axis=-1)  # columns
        det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
        jinv_t = np.empty_like(J)
        jinv_t[:, 0, 0] = J[:, 1, 1] / det
        jinv_t[:, 0, 1] = -J[:, 1, 0] / det
        jinv_t[:, 1, 0] = -J[:, 0, 1] / det
        jinv_t[:, 1, 1] = J[:, 0, 0] / det
        points = np.einsum("qa,cad->cqd", rule.points, v)
        wdet = np.abs(det)[:, None] * rule.weights[None, :]
        phi1, g1 = p1_basis(rule.points)
        phi2, g2 = p2_basis(rule.points)
        dphi1 = np.einsum("cij,aj->cai", jinv_t, g1)
        dphi2 = np.einsum("cij,qaj->cqai", jinv_t, g2)
        return cls(rule, det, jinv_t, points, wdet, phi1, dphi1, phi2, dphi2)

    @property
    def x(self):
        return self.points[..., 0]

    @property
    def z(self):
        return self.points[..., 1]


def _scatter(local: np.ndarray, rows: np.ndarray, cols: np.ndarray, shape) -> sp.csr_matrix:
    nr, nc_ = local.shape[1], local.shape[2]
    I = np.repeat(rows[:, :, None], nc_, axis=2)
    J = np.repeat(cols[:, None, :], nr, axis=1)
    A = sp.coo_matrix((local.ravel(), (I.ravel(), J.ravel())), shape=shape).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def _scatter_vec(local: np.ndarray, dofs: np.ndarray, n: int) -> np.ndarray:
    return np.bincount(dofs.ravel(), weights=local.ravel(), minlength=n)


# -- local forms -----------------------------------------------------------------

def _vector_grads(geo: CellGeometry) -> np.ndarray:
    """Gradients of the 12 interleaved vector basis functions: (nc, nq, 12, 2, 2).

    Entry [..., 2a + c, i, j] is d_j of component i of phi_a e_c.
    """
    nc, nq = geo.wdet.shape
    G = np.zeros((nc, nq, 12, 2, 2))
    for c in range(2):
        G[:, :, c::2, c, :] = geo.dphi2
    return G


def _strain_form(geo: CellGeometry, eta: np.ndarray, graddiv: np.ndarray) -> np.ndarray:
    """Local matrices of int eta Du:Dv + graddiv (div u)(div v)."""
    G = _vector_grads(geo)
    D = 0.5 * (G + np.swapaxes(G, -1, -2))
    div = G[..., 0, 0] + G[..., 1, 1]
    w_eta = geo.wdet * eta
    w_gd = geo.wdet * graddiv
    local = np.einsum("cq,cqaij,cqbij->cab", w_eta, D, D, optimize=True)
    local += np.einsum("cq,cqa,cqb->cab", w_gd, div, div, optimize=True)
    return local


def _divergence_form(geo: CellGeometry) -> np.ndarray:
    """Local -int q div v: (nc, 3, 12)."""
    G = _vector_grads(geo)
    div = G[..., 0, 0] + G[..., 1, 1]
    return -np.einsum("cq,qa,cqb->cab", geo.wdet, geo.phi1, div, optimize=True)


def _mass_p1(geo: CellGeometry, weight: np.ndarray) -> np.ndarray:
    return np.einsum("cq,qa,qb->cab", geo.wdet * weight, geo.phi1, geo.phi1, optimize=True)


def _stiffness_p1(geo: CellGeometry, weight: np.ndarray) -> np.ndarray:
    w = np.einsum("cq->c", geo.wdet * weight)
    return np.einsum("c,cai,cbi->cab", w, geo.dphi1, geo.dphi1, optimize=True)


# -- systems ----------------------------------------------------------------------

@dataclass
class Spaces:
    mesh: TriMesh
    V: DofMap
    M: DofMap

    @classmethod
    def build(cls, mesh: TriMesh) -> "Spaces":
        return cls(mesh, build_dofmap(mesh, ElementKind.P2_VECTOR), build_dofmap(mesh, ElementKind.P1))


@dataclass
class BoundaryData:
    dofs: np.ndarray
    values: np.ndarray


def velocity_bc(spaces: Spaces, sol=None) -> BoundaryData:
    """Dirichlet data on the whole boundary: the exact velocity, or zero."""
    dofs = boundary_dofs(spaces.V)
    if sol is None:
        return BoundaryData(dofs, np.zeros(dofs.size))
    xz = spaces.V.dof_coords[dofs]
    u = sol.u(xz[:, 0], xz[:, 1])
    return BoundaryData(dofs, u[np.arange(dofs.size), dofs % 2])


@dataclass
class BlockSystem3:
    """[[K, G^T, G^T], [G, -C, 0], [G, 0, -Qz]] with Dirichlet rows eliminated."""

    K: sp.csr_matrix
    G: sp.csr_matrix
    C: sp.csr_matrix
    Q_zeta: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    rhs_pc: np.ndarray
    bc: BoundaryData
    spaces: Spaces = field(repr=False)
    coeffs: CoefficientModel = field(repr=False)
    geometry: CellGeometry = field(repr=False)

    @property
    def sizes(self) -> tuple[int, int, int]:
        return self.K.shape[0], self.G.shape[0], self.G.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return np.cumsum((0,) + self.sizes)

    def matrix(self) -> sp.csr_matrix:
        Gt = self.G.T.tocsr()
        return sp.bmat([[self.K, Gt, Gt], [self.G, -self.C, None], [self.G, None, -self.Q_zeta]],
                       format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u, self.rhs_p, self.rhs_pc])

    def split(self, x: np.ndarray):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]], x[o[2]:o[3]]

    def pressure_slice(self) -> slice:
        o = self.offsets
        return slice(o[1], o[2])


@dataclass
class BlockSystem2:
    """[[Ktilde, G^T], [G, -C]] with the grad-div term inside Ktilde."""

    Ktilde: sp.csr_matrix
    G: sp.csr_matrix
    C: sp.csr_matrix
    rhs_u: np.ndarray
    rhs_p: np.ndarray
    bc: BoundaryData
    spaces: Spaces = field(repr=False)
    coeffs: CoefficientModel = field(repr=False)
    geometry: CellGeometry = field(repr=False)

    @property
    def sizes(self) -> tuple[int, int]:
        return self.Ktilde.shape[0], self.G.shape[0]

    @property
    def offsets(self) -> np.ndarray:
        return np.cumsum((0,) + self.sizes)

    def matrix(self) -> sp.csr_matrix:
        return sp.bmat([[self.Ktilde, self.G.T], [self.G, -self.C]], format="csr")

    def rhs(self) -> np.ndarray:
        return np.concatenate([self.rhs_u, self.rhs_p])

    def split(self, x):
        o = self.offsets
        return x[o[0]:o[1]], x[o[1]:o[2]]

    def pressure_slice(self) -> slice:
        o = self.offsets
        return slice(o[1], o[2])


def _load_vectors(spaces, geo, coeffs, vals, sources, buoyancy):
    nu, npr = spaces.V.n_dofs, spaces.M.n_dofs
    nc, nq = geo.wdet.shape
    fu = np.zeros((nc, nq, 2))
    gp = np.zeros((nc, nq))
    gk = np.zeros((nc, nq, 2))
    if sources is not None:
        fu += sources.f_momentum(geo.x, geo.z)
        gp -= sources.g_mass(geo.x, geo.z)
    if buoyancy:
        e3 = np.asarray(coeffs.e3)
        fu += vals["phi"][..., None] * e3
        gk -= vals["k"][..., None] * e3
    # vector test functions phi_a e_c
    loc_u = np.empty((nc, 12))
    for c in range(2):
        loc_u[:, c::2] = np.einsum("cq,qa->ca", geo.wdet * fu[..., c], geo.phi2)
    loc_p = np.einsum("cq,qa->ca", geo.wdet * gp, geo.phi1)
    loc_p += np.einsum("cq,cqi,cai->ca", geo.wdet, gk, geo.dphi1)
    rhs_u = _scatter_vec(loc_u, spaces.V.cell_dofs, nu)
    rhs_p = _scatter_vec(loc_p, spaces.M.cell_dofs, npr)
    return rhs_u, rhs_p


def _eliminate(K, couplings, rhs_u, rhs_others, bc: BoundaryData):
    """Symmetric Dirichlet elimination: lift into the rhs, zero rows/cols, unit diagonal."""
    n = K.shape[0]
    g = np.zeros(n)
    g[bc.dofs] = bc.values
    rhs_u = rhs_u - K @ g
    rhs_others = [r - B @ g for r, B in zip(rhs_others, couplings)]
    keep = np.ones(n)
    keep[bc.dofs] = 0.0
    Dk = sp.diags(keep)
    K = (Dk @ K @ Dk + sp.diags(1.0 - keep)).tocsr()
    couplings = [(B @ Dk).tocsr() for B in couplings]
    for A in [K] + couplings:
        A.eliminate_zeros()
        A.sort_indices()
    rhs_u[bc.dofs] = bc.values
    return K, couplings, rhs_u, rhs_others


def _check_zeta(coeffs, vals):
    if not coeffs.allow_zero_zeta_inv and np.any(vals["zeta_inv"] <= 0):
        raise DegenerateModelError("1/zeta must be positive unless explicitly allowed")
    if not np.all(np.isfinite(vals["zeta_inv"])):
        raise DegenerateModelError("1/zeta must be finite in the three-field formulation "
                                   "(zero bulk viscosity needs a positive floor)")


def assemble_three_field(mesh: TriMesh, coeffs: CoefficientModel, sources=None,
                         bc: BoundaryData | None = None, buoyancy: bool = False,
                         spaces: Spaces | None = None,
                         geometry: CellGeometry | None = None) -> BlockSystem3:
    """Blocks of the three-field system.

    ``sources`` is an exact solution providing ``f_momentum``/``g_mass``;
    when given and ``bc`` is None, its velocity supplies the Dirichlet data.
    """
    spaces = spaces or Spaces.build(mesh)
    geo = geometry or CellGeometry.build(mesh)
    vals = coeffs.sample(geo.x, geo.z)
    _check_zeta(coeffs, vals)
    nu, npr = spaces.V.n_dofs, spaces.M.n_dofs
    Vd, Md = spaces.V.cell_dofs, spaces.M.cell_dofs

    K = _scatter(_strain_form(geo, vals["eta"], -vals["eta"] / 3.0), Vd, Vd, (nu, nu))
    G = _scatter(_divergence_form(geo), Md, Vd, (npr, nu))
    C = _scatter(_stiffness_p1(geo, vals["k"]), Md, Md, (npr, npr))
    Qz = _scatter(_mass_p1(geo, vals["zeta_inv"]), Md, Md, (npr, npr))
    rhs_u, rhs_p = _load_vectors(spaces, geo, coeffs, vals, sources, buoyancy)
    rhs_pc = np.zeros(npr)

    if bc is None:
        bc = velocity_bc(spaces, sources)
    K, (G, G2), rhs_u, (rhs_p, rhs_pc) = _eliminate(K, [G, G], rhs_u, [rhs_p, rhs_pc], bc)
    return BlockSystem3(K, G, C, Qz, rhs_u, rhs_p, rhs_pc, bc, spaces, coeffs, geo)


def assemble_two_field(mesh: TriMesh, coeffs: CoefficientModel, sources=None,
                       bc: BoundaryData | None = None, buoyancy: bool = False,
                       spaces: Spaces | None = None,
                       geometry: CellGeometry | None = None) -> BlockSystem2:
    """Velocity/pressure system with the (zeta - eta/3) grad-div term in Ktilde."""
    spaces = spaces or Spaces.build(mesh)
    geo = geometry or CellGeometry.build(mesh)
    vals = coeffs.sample(geo.x, geo.z)
    with np.errstate(divide="ignore"):
        zeta = 1.0 / vals["zeta_inv"]
    if not np.all(np.isfinite(zeta)):
        raise DegenerateModelError("bulk viscosity is unbounded at a quadrature point")
    nu, npr = spaces.V.n_dofs, spaces.M.n_dofs
    Vd, Md = spaces.V.cell_dofs, spaces.M.cell_dofs

    Kt = _scatter(_strain_form(geo, vals["eta"], zeta - vals["eta"] / 3.0), Vd, Vd, (nu, nu))
    G = _scatter(_divergence_form(geo), Md, Vd, (npr, nu))
    C = _scatter(_stiffness_p1(geo, vals["k"]), Md, Md, (npr, npr))
    rhs_u, rhs_p = _load_vectors(spaces, geo, coeffs, vals, sources, buoyancy)
    if bc is None:
        bc = velocity_bc(spaces, sources)
    Kt, (G,), rhs_u, (rhs_p,) = _eliminate(Kt, [G], rhs_u, [rhs_p], bc)
    return BlockSystem2(Kt, G, C, rhs_u, rhs_p, bc, spaces, coeffs, geo)


def assemble_precon_blocks(mesh: TriMesh, coeffs: CoefficientModel,
                           spaces: Spaces | None = None,
                           geometry: CellGeometry | None = None) -> dict[str, sp.csr_matrix]:
    """Pressure mass matrices weighted by 1/eta and by 1/(2 eta) + 1/zeta."""
    spaces = spaces or Spaces.build(mesh)
    geo = geometry or CellGeometry.build(mesh)
    vals = coeffs.sample(geo.x, geo.z)
    Md, npr = spaces.M.cell_dofs, spaces.M.n_dofs
    inv_eta = 1.0 / vals["eta"]
    out = {"Q_eta": _scatter(_mass_p1(geo, inv_eta), Md, Md, (npr, npr))}
    # zero bulk viscosity only arises in the two-field setting, which needs Q_eta alone
    if np.all(np.isfinite(vals["zeta_inv"])):
        out["Q_eta_zeta"] = _scatter(_mass_p1(geo, 0.5 * inv_eta + vals["zeta_inv"]),
                                     Md, Md, (npr, npr))
    return out


def pressure_mass(mesh: TriMesh, spaces: Spaces | None = None,
                  geometry: CellGeometry | None = None) -> sp.csr_matrix:
    spaces = spaces or Spaces.build(mesh)
    geo = geometry or CellGeometry.build(mesh)
    return _scatter(_mass_p1(geo, np.ones_like(geo.wdet)), spaces.M.cell_dofs,
                    spaces.M.cell_dofs, (spaces.M.n_dofs,) * 2)


# -- post-processing ----------------------------------------------------------------

def recover_fluid_velocity(u_s: np.ndarray, p: np.ndarray, coeffs: CoefficientModel,
                           spaces: Spaces, buoyancy: bool = True) -> np.ndarray:
    """Fluid velocity u_s - (k/phi)(grad p - e3) at the P2 nodes, shape (n_nodes, 2).

    grad p is the cellwise-constant P1 gradient, averaged over the cells
    sharing a node with area weights.  Nodes where phi vanishes but k does
    not are NaN.
    """
    mesh = spaces.mesh
    geo = CellGeometry.build(mesh)
    grad_cell = np.einsum("ca,cai->ci", p[spaces.M.cell_dofs], geo.dphi1)
    if buoyancy:
        grad_cell = grad_cell - np.asarray(coeffs.e3)[None, :]
    area = 0.5 * np.abs(geo.det)
    nodes = spaces.V.cell_dofs[:, 0::2] // 2
    nn = spaces.V.n_nodes
    wsum = np.bincount(nodes.ravel(), weights=np.repeat(area, 6), minlength=nn)
    gnode = np.stack([
        np.bincount(nodes.ravel(), weights=np.repeat(area * grad_cell[:, i], 6), minlength=nn)
        for i in range(2)], -1) / wsum[:, None]
    xy = spaces.V.dof_coords[0::2]
    k = coeffs.k(xy[:, 0], xy[:, 1])
    phi = coeffs.phi(xy[:, 0], xy[:, 1])
    us = u_s.reshape(-1, 2)
    safe_phi = np.where(phi > 0, phi, 1.0)
    ratio = np.where(phi > 0, k / safe_phi, np.where(k == 0, 0.0, np.nan))
    return us - ratio[:, None] * gnode


def l2_errors(spaces: Spaces, u: np.ndarray, p: np.ndarray, sol,
              rule: QuadratureRule | None = None) -> tuple[float, float, float]:
    """L2 errors of (u_x, u_z, p) against an exact solution.

    Both pressures are shifted to zero mean first, since p is determined
    only up to a constant.  The default 36-point rule integrates the squared
    P2 error exactly up to the smooth-field remainder.
    """
    from .quadrature import collapsed_gauss
    geo = CellGeometry.build(spaces.mesh, rule or collapsed_gauss(6))
    Vd = spaces.V.cell_dofs
    uh = np.stack([np.einsum("qa,ca->cq", geo.phi2, u[Vd[:, c::2]]) for c in range(2)], -1)
    ph = np.einsum("qa,ca->cq", geo.phi1, p[spaces.M.cell_dofs])
    ue = sol.u(geo.x, geo.z)
    pe = sol.p(geo.x, geo.z)
    area = geo.wdet.sum()
    ph = ph - (geo.wdet * ph).sum() / area
    pe = pe - (geo.wdet * pe).sum() / area
    ex, ez = (float(np.sqrt((geo.wdet * (uh[..., c] - ue[..., c]) ** 2).sum())) for c in range(2))
    return ex, ez, float(np.sqrt((geo.wdet * (ph - pe) ** 2).sum()))


# -- export -------------------------------------------------------------------------

def export_matrix_market(sys: BlockSystem3, outdir: str | Path,
                         precon: dict[str, sp.csr_matrix] | None = None) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    items = {"K": sys.K, "G": sys.G, "C": sys.C, "Q": sys.Q_zeta}
    if precon is not None:
        items["Qeta"] = precon["Q_eta"]
        items["Qetazeta"] = precon["Q_eta_zeta"]
    written = []
    for name, A in items.items():
        path = outdir / f"{name}.mtx"
        scipy.io.mmwrite(path, A.tocoo(), precision=17)
        written.append(path)
    for name, v in (("rhs_u", sys.rhs_u), ("rhs_p", sys.rhs_p)):
        path = outdir / f"{name}.mtx"
        scipy.io.mmwrite(path, v.reshape(-1, 1), precision=17)
        written.append(path)
    return written
