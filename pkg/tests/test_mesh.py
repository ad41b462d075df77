import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from magmapc.mesh import (BOUNDARY_TAGS, ElementKind, boundary_dofs, build_dofmap,
                          build_unit_square_mesh, on_boundary, read_mesh, write_mesh)


def test_smallest_mesh():
    mesh = build_unit_square_mesh(1)
    assert mesh.n_cells == 2
    assert mesh.vertices.shape == (4, 2)


def test_cell_count_matches_2N():
    assert build_unit_square_mesh(32).n_cells == 2048


def test_uniform_areas_n2():
    areas = build_unit_square_mesh(2).signed_areas()
    np.testing.assert_allclose(areas, 0.125, rtol=0, atol=1e-15)
    assert areas.sum() == pytest.approx(1.0, abs=1e-12)


def test_zero_side_rejected():
    with pytest.raises(ValueError):
        build_unit_square_mesh(0)


def test_other_diagonals_rejected():
    with pytest.raises(ValueError):
        build_unit_square_mesh(2, diagonal="crossed")


def test_diagonal_direction():
    mesh = build_unit_square_mesh(1)
    # both cells contain the (0,0)-(1,1) diagonal
    for cell in mesh.cells:
        pts = {tuple(mesh.vertices[v]) for v in cell}
        assert {(0.0, 0.0), (1.0, 1.0)} <= pts


@settings(max_examples=15, deadline=None)
@given(st.integers(min_value=1, max_value=24))
def test_mesh_invariants(n):
    mesh = build_unit_square_mesh(n)
    areas = mesh.signed_areas()
    assert mesh.n_cells == 2 * n * n
    assert np.all(areas > 0)
    assert abs(areas.sum() - 1.0) < 1e-12
    _, counts = mesh.edges()
    n_boundary_edges = 4 * n
    assert np.sum(counts == 1) == n_boundary_edges
    assert set(np.unique(counts)) <= {1, 2}
    # boundary facets lie on the boundary and carry the right tag
    bf = mesh.boundary_facets
    assert len(bf) == n_boundary_edges
    for cell, edge, tag in bf:
        others = [v for i, v in enumerate(mesh.cells[cell]) if i != edge]
        pts = mesh.vertices[others]
        assert np.all(on_boundary(pts))
        assert tag in BOUNDARY_TAGS.values()


def test_boundary_tags_by_side():
    mesh = build_unit_square_mesh(3)
    for cell, edge, tag in mesh.boundary_facets:
        others = [v for i, v in enumerate(mesh.cells[cell]) if i != edge]
        mid = mesh.vertices[others].mean(axis=0)
        expected = {"left": mid[0] == 0, "right": mid[0] == 1,
                    "bottom": mid[1] == 0, "top": mid[1] == 1}
        assert expected[[k for k, v in BOUNDARY_TAGS.items() if v == tag][0]]


@pytest.mark.parametrize("n, kind, count", [
    (1, ElementKind.P1, 4),
    (32, ElementKind.P1, 1089),
    (32, ElementKind.P2_VECTOR, 8450),
    (3, ElementKind.P2, 49),
])
def test_dof_counts(n, kind, count):
    assert build_dofmap(build_unit_square_mesh(n), kind).n_dofs == count


def test_boundary_dof_examples():
    m1 = build_unit_square_mesh(1)
    assert len(boundary_dofs(build_dofmap(m1, "P1-scalar"), m1)) == 4
    m2 = build_unit_square_mesh(2)
    p1 = build_dofmap(m2, "P1-scalar")
    bd = boundary_dofs(p1, m2)
    assert len(bd) == 8
    assert 4 not in bd  # centre vertex
    assert len(boundary_dofs(build_dofmap(m2, "P2-scalar"), m2)) == 16


def test_p2_continuity_shared_nodes():
    """Coordinates computed from each cell agree with the global dof coordinates."""
    mesh = build_unit_square_mesh(3)
    dm = build_dofmap(mesh, ElementKind.P2)
    v = mesh.vertices[mesh.cells]
    mids = np.stack([(v[:, 1] + v[:, 2]) / 2, (v[:, 2] + v[:, 0]) / 2, (v[:, 0] + v[:, 1]) / 2], 1)
    local = np.concatenate([v, mids], axis=1)
    np.testing.assert_allclose(dm.dof_coords[dm.cell_dofs], local, atol=1e-15)
    assert len(np.unique(dm.cell_dofs)) == dm.n_dofs


def test_vector_dofs_interleaved():
    mesh = build_unit_square_mesh(2)
    dm = build_dofmap(mesh, ElementKind.P2_VECTOR)
    assert np.all(dm.cell_dofs[:, 1::2] == dm.cell_dofs[:, 0::2] + 1)
    assert np.all(dm.cell_dofs[:, 0::2] % 2 == 0)


def test_dofmap_deterministic():
    a = build_dofmap(build_unit_square_mesh(5), "P2-vector-2D")
    b = build_dofmap(build_unit_square_mesh(5), "P2-vector-2D")
    assert np.array_equal(a.cell_dofs, b.cell_dofs)
    assert np.array_equal(a.dof_coords, b.dof_coords)


def test_mesh_immutable():
    mesh = build_unit_square_mesh(2)
    with pytest.raises(ValueError):
        mesh.vertices[0, 0] = 5.0


def test_mesh_text_round_trip(tmp_path):
    mesh = build_unit_square_mesh(3)
    path = tmp_path / "mesh.txt"
    write_mesh(mesh, path)
    verts, cells = read_mesh(path)
    np.testing.assert_array_equal(verts, mesh.vertices)
    np.testing.assert_array_equal(cells, mesh.cells)
