"""Structured triangulations of the unit square and Lagrange dof maps."""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

BOUNDARY_TAGS = {"left": 1, "right": 2, "bottom": 3, "top": 4}

# Local P2 node ordering: three vertices, then the midpoint of the edge
# opposite vertex 0, 1 and 2.
P2_EDGES = ((1, 2), (2, 0), (0, 1))


class ElementKind(str, Enum):
    P1 = "P1-scalar"
    P2 = "P2-scalar"
    P2_VECTOR = "P2-vector-2D"


@dataclass(frozen=True)
class TriMesh:
    n_side: int
    vertices: np.ndarray
    cells: np.ndarray
    # rows of (cell, local edge, tag); local edge e is opposite vertex e
    boundary_facets: np.ndarray = field(repr=False)

    @property
    def n_cells(self) -> int:
        return self.cells.shape[0]

    @property
    def h(self) -> float:
        return 1.0 / self.n_side

    def signed_areas(self) -> np.ndarray:
        v = self.vertices[self.cells]
        e1 = v[:, 1] - v[:, 0]
        e2 = v[:, 2] - v[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    def edges(self) -> tuple[np.ndarray, np.ndarray]:
        """Unique edges (sorted vertex pairs) and how many cells share each."""
        local = np.array([(1, 2), (2, 0), (0, 1)])
        pairs = np.sort(self.cells[:, local].reshape(-1, 2), axis=1)
        return np.unique(pairs, axis=0, return_counts=True)


def build_unit_square_mesh(n_side: int, diagonal: str = "left-to-right") -> TriMesh:
    """Split each of the n_side x n_side squares along its (i, j)->(i+1, j+1) diagonal.

    Vertices are numbered lexicographically with x running fastest.
    """
    n_side = int(n_side)
    if n_side < 1:
        raise ValueError(f"n_side must be >= 1, got {n_side}")
    if diagonal != "left-to-right":
        raise ValueError(f"unsupported diagonal orientation {diagonal!r}")

    n = n_side
    xs = np.linspace(0.0, 1.0, n + 1)
    X, Z = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Z.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n), indexing="xy")
    i, j = i.ravel(), j.ravel()
    v00 = j * (n + 1) + i
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    cells = np.empty((2 * n * n, 3), dtype=np.int64)
    cells[0::2] = lower
    cells[1::2] = upper

    facets = []
    sq = np.arange(n)
    # bottom row squares: lower triangle, edge (0,1) is opposite vertex 2
    facets.append(np.column_stack([2 * sq, np.full(n, 2), np.full(n, BOUNDARY_TAGS["bottom"])]))
    # right column: lower triangle, edge (1,2) opposite vertex 0
    right = (sq * n + (n - 1))
    facets.append(np.column_stack([2 * right, np.zeros(n, int), np.full(n, BOUNDARY_TAGS["right"])]))
    # top row: upper triangle, edge (1,2) = v11-v01 opposite vertex 0
    top = (n - 1) * n + sq
    facets.append(np.column_stack([2 * top + 1, np.zeros(n, int), np.full(n, BOUNDARY_TAGS["top"])]))
    # left column: upper triangle, edge (2,0) = v01-v00 opposite vertex 1
    left = sq * n
    facets.append(np.column_stack([2 * left + 1, np.ones(n, int), np.full(n, BOUNDARY_TAGS["left"])]))
    boundary_facets = np.vstack(facets).astype(np.int64)

    for arr in (vertices, cells, boundary_facets):
        arr.setflags(write=False)
    return TriMesh(n_side=n, vertices=vertices, cells=cells, boundary_facets=boundary_facets)


@dataclass(frozen=True)
class DofMap:
    element_kind: ElementKind
    n_dofs: int
    cell_dofs: np.ndarray
    dof_coords: np.ndarray
    n_nodes: int
    block_size: int = 1

    def node_of(self, dofs: np.ndarray) -> np.ndarray:
        return np.asarray(dofs) // self.block_size


def _p2_cell_nodes(mesh: TriMesh) -> np.ndarray:
    # every P2 node of the structured mesh sits on the (2n+1)^2 half-step grid
    m = 2 * mesh.n_side + 1
    ij = np.rint(mesh.vertices * (2 * mesh.n_side)).astype(np.int64)
    vert_node = ij[:, 1] * m + ij[:, 0]
    cv = vert_node[mesh.cells]
    vij = ij[mesh.cells]
    mids = []
    for a, b in P2_EDGES:
        mij = (vij[:, a] + vij[:, b]) // 2
        mids.append(mij[:, 1] * m + mij[:, 0])
    return np.column_stack([cv] + mids)


def build_dofmap(mesh: TriMesh, kind: ElementKind | str) -> DofMap:
    """Global numbering is lexicographic in the node coordinates (x fastest).

    Vector fields interleave components per node: dof 2*node + component.
    """
    kind = ElementKind(kind)
    if kind is ElementKind.P1:
        m = mesh.n_side + 1
        cell_nodes = mesh.cells.copy()
        coords = mesh.vertices.copy()
    else:
        m = 2 * mesh.n_side + 1
        cell_nodes = _p2_cell_nodes(mesh)
        s = np.linspace(0.0, 1.0, m)
        X, Z = np.meshgrid(s, s, indexing="xy")
        coords = np.column_stack([X.ravel(), Z.ravel()])
    n_nodes = m * m

    if kind is ElementKind.P2_VECTOR:
        cell_dofs = np.empty((cell_nodes.shape[0], 12), dtype=np.int64)
        cell_dofs[:, 0::2] = 2 * cell_nodes
        cell_dofs[:, 1::2] = 2 * cell_nodes + 1
        dof_coords = np.repeat(coords, 2, axis=0)
        n_dofs, bs = 2 * n_nodes, 2
    else:
        cell_dofs = cell_nodes
        dof_coords = coords
        n_dofs, bs = n_nodes, 1
    for arr in (cell_dofs, dof_coords):
        arr.setflags(write=False)
    return DofMap(kind, n_dofs, cell_dofs, dof_coords, n_nodes, bs)


def on_boundary(points: np.ndarray, tol: float = 1e-12) -> np.ndarray:
    x, z = np.asarray(points)[..., 0], np.asarray(points)[..., 1]
    return (np.abs(x) < tol) | (np.abs(x - 1) < tol) | (np.abs(z) < tol) | (np.abs(z - 1) < tol)


def boundary_dofs(dofmap: DofMap, mesh: TriMesh | None = None) -> np.ndarray:
    """Sorted indices of the dofs whose nodes lie on the boundary of the unit square."""
    return np.flatnonzero(on_boundary(dofmap.dof_coords))


def write_mesh(mesh: TriMesh, path: str | Path) -> None:
    """Plain-text dump: header line, one ``x z`` per vertex, one ``a b c`` per cell."""
    path = Path(path)
    with path.open("w") as fh:
        fh.write(f"{len(mesh.vertices)} {mesh.n_cells}\n")
        for x, z in mesh.vertices:
            fh.write(f"{x:.17g} {z:.17g}\n")
        for a, b, c in mesh.cells:
            fh.write(f"{a} {b} {c}\n")


def read_mesh(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    with Path(path).open() as fh:
        nv, nc = map(int, fh.readline().split())
        data = np.loadtxt(fh, ndmin=2, max_rows=nv)
        cells = np.loadtxt(fh, dtype=np.int64, ndmin=2, max_rows=nc)
    return data, cells
