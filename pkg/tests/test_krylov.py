import numpy as np
import pytest
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from magmapc.assembly import pressure_mass
from magmapc.krylov import (METHODS, ConstantPressure, KrylovConfig, SolveReport, bicgstab,
                            gmres, minres, project_constant_pressure, solve)
from magmapc.linalg import factorize
from magmapc.precond import build


@pytest.fixture(scope="module")
def tc1_problem():
    from magmapc.assembly import assemble_precon_blocks, assemble_three_field
    from magmapc.manufactured import exact_solution_tc1
    from magmapc.mesh import build_unit_square_mesh
    sol = exact_solution_tc1(alpha=1.0)
    mesh = build_unit_square_mesh(8)
    s = assemble_three_field(mesh, sol.coeffs, sol)
    blocks = assemble_precon_blocks(mesh, sol.coeffs, s.spaces, s.geometry)
    w = np.asarray(pressure_mass(mesh, s.spaces, s.geometry).sum(axis=1)).ravel()
    return s, blocks, ConstantPressure(s.pressure_slice(), w)


def _bordered_inverse(s):
    """Exact inverse of the system on the complement of the constant fluid pressure."""
    A = s.matrix()
    n = A.shape[0]
    c = np.zeros(n)
    c[s.pressure_slice()] = 1.0
    B = sp.bmat([[A, sp.csr_matrix(c[:, None])], [sp.csr_matrix(c[None, :]), None]], format="csc")
    lu = factorize(B)
    return lambda r: lu.solve(np.append(r, 0.0))[:n]


@pytest.mark.parametrize("method", METHODS)
def test_identity_system_converges_in_one(method, rng):
    A = sp.identity(20, format="csr")
    b = rng.standard_normal(20)
    x, rep = solve(A, None, b, KrylovConfig(method=method), None)
    assert rep.converged and rep.iterations == 1
    np.testing.assert_allclose(x, b, atol=1e-14)


@pytest.mark.parametrize("method", ["gmres", "bicgstab"])
def test_exact_inverse_on_full_system(method, tc1_problem):
    s, _, ns = tc1_problem
    x, rep = solve(s.matrix(), _bordered_inverse(s), s.rhs(), KrylovConfig(method=method), ns)
    assert rep.converged and rep.iterations <= 2


@pytest.mark.parametrize("method", METHODS)
def test_exact_inverse_on_velocity_block(method, tc1_problem, rng):
    s, _, _ = tc1_problem
    f = factorize(s.K, "cholesky-spd")
    _, rep = solve(s.K, f.solve, rng.standard_normal(s.K.shape[0]), KrylovConfig(method=method), None)
    assert rep.converged and rep.iterations <= 2


def test_methods_agree_in_energy_norm(tc1_problem):
    s, blocks, ns = tc1_problem
    n_u = s.sizes[0]
    sols = {}
    for method, kind in (("minres", "diagonal"), ("gmres", "lower"), ("bicgstab", "lower")):
        cfg = KrylovConfig(method=method, rel_tol=1e-11, max_iters=500)
        x, rep = solve(s.matrix(), build(kind, s, blocks), s.rhs(), cfg, ns)
        assert rep.converged
        sols[method] = x[:n_u]
    ref = sols["minres"]
    energy = np.sqrt(ref @ (s.K @ ref))
    for method in ("gmres", "bicgstab"):
        d = sols[method] - ref
        assert np.sqrt(d @ (s.K @ d)) <= 1e-6 * energy


@pytest.mark.parametrize("method, kind", [("minres", "diagonal"), ("gmres", "lower"),
                                          ("bicgstab", "lower"), ("gmres", "upper")])
def test_solution_has_zero_mean_pressure(method, kind, tc1_problem):
    s, blocks, ns = tc1_problem
    x, rep = solve(s.matrix(), build(kind, s, blocks), s.rhs(), KrylovConfig(method=method), ns)
    assert rep.converged
    assert rep.residual_history[-1] <= 1e-8
    assert np.linalg.norm(s.rhs() - s.matrix() @ x) <= 1.01e-8 * np.linalg.norm(ns.project_dual(s.rhs()))
    p = x[s.pressure_slice()]
    assert abs(ns.weights @ p) <= 1e-8 * np.linalg.norm(p)


def test_preconditioned_residual_mode(tc1_problem):
    s, blocks, ns = tc1_problem
    cfg = KrylovConfig(method="minres", residual_kind="preconditioned", rel_tol=1e-6)
    _, rep = solve(s.matrix(), build("diagonal", s, blocks), s.rhs(), cfg, ns)
    assert rep.converged and rep.precond_history[-1] <= 1e-6
    assert len(rep.precond_history) == len(rep.residual_history)


def test_projection_properties(rng):
    block = slice(3, 10)
    w = rng.uniform(0.5, 1.5, 7)
    v = rng.standard_normal(14)
    once = project_constant_pressure(v, block, w)
    np.testing.assert_allclose(project_constant_pressure(once, block, w), once, atol=1e-14)
    assert abs(w @ once[block]) <= 1e-13
    np.testing.assert_array_equal(once[:3], v[:3])
    np.testing.assert_array_equal(once[10:], v[10:])
    const = np.zeros(14)
    const[block] = 4.2
    np.testing.assert_allclose(project_constant_pressure(const, block, w)[block], 0.0, atol=1e-14)
    ns = ConstantPressure(block, w)
    assert abs(ns.project_dual(v)[block].sum()) <= 1e-13


def test_max_iterations_reported(tc1_problem):
    s, blocks, ns = tc1_problem
    for method, kind in (("minres", "diagonal"), ("gmres", "lower"), ("bicgstab", "lower")):
        cfg = KrylovConfig(method=method, max_iters=3)
        _, rep = solve(s.matrix(), build(kind, s, blocks), s.rhs(), cfg, ns)
        assert not rep.converged and rep.breakdown_reason == "max-iters"
        assert rep.iterations == 3


def test_gmres_restart_counts_inner_steps(tc1_problem):
    s, blocks, ns = tc1_problem
    pc = build("lower", s, blocks)
    _, full = gmres(s.matrix(), pc, s.rhs(), KrylovConfig(method="gmres"), ns)
    _, short = gmres(s.matrix(), pc, s.rhs(), KrylovConfig(method="gmres", restart=3), ns)
    assert full.converged and short.converged
    assert short.iterations >= full.iterations


def test_minres_detects_indefinite_preconditioner(tc1_problem):
    s, _, ns = tc1_problem
    neg = lambda r: -r  # noqa: E731
    _, rep = minres(s.matrix(), neg, s.rhs(), KrylovConfig(), ns)
    assert not rep.converged and rep.breakdown_reason == "indefinite-preconditioner"


def test_stagnation_detection(rng):
    # a rotation: unpreconditioned GMRES(1) makes no progress
    A = sp.csr_matrix(np.array([[0.0, 1.0], [-1.0, 0.0]]))
    cfg = KrylovConfig(method="gmres", restart=1, max_iters=100, stagnation_window=5)
    _, rep = gmres(A, None, np.array([1.0, 0.0]), cfg, None)
    assert not rep.converged and rep.breakdown_reason == "stagnation"


def test_bicgstab_matches_scipy_on_nonsymmetric(rng):
    n = 60
    A = sp.diags([-1.2, 2.5, -0.8], [-1, 0, 1], shape=(n, n), format="csr")
    b = rng.standard_normal(n)
    x, rep = bicgstab(A, None, b, KrylovConfig(method="bicgstab", rel_tol=1e-12), None)
    assert rep.converged
    np.testing.assert_allclose(x, spla.spsolve(A.tocsc(), b), rtol=1e-9, atol=1e-10)


@pytest.mark.parametrize("kwargs", [dict(method="cg"), dict(rel_tol=0.0),
                                    dict(method="gmres", restart=0), dict(residual_kind="energy"),
                                    dict(max_iters=0)])
def test_config_validation(kwargs):
    with pytest.raises(ValueError):
        KrylovConfig(**kwargs)


def test_history_csv(tmp_path):
    rep = SolveReport(iterations=2, converged=True, residual_history=[1.0, 0.1, 1e-9],
                      precond_history=[1.0, 0.2, 2e-9])
    path = tmp_path / "h.csv"
    rep.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "iteration,true_residual,preconditioned_residual"
    assert len(lines) == 4 and lines[3].startswith("2,1.0000000000e-09")
    assert rep.final_residual == 1e-9


def test_iteration_counts_deterministic(tc1_problem):
    s, blocks, ns = tc1_problem
    reps = [solve(s.matrix(), build("lower", s, blocks), s.rhs(),
                  KrylovConfig(method="bicgstab"), ns)[1] for _ in range(2)]
    assert reps[0].iterations == reps[1].iterations
    assert reps[0].residual_history == reps[1].residual_history
