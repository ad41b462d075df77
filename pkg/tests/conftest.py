import numpy as np
import pytest

from magmapc.assembly import assemble_precon_blocks, assemble_three_field
from magmapc.coefficients import constant_model
from magmapc.manufactured import exact_solution_tc1
from magmapc.mesh import build_unit_square_mesh


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def small_constant_system():
    """Three-field system with eta = 1, zeta = 4/3, k = 1 on a 4x4 mesh."""
    mesh = build_unit_square_mesh(4)
    coeffs = constant_model(eta=1.0, zeta=4.0 / 3.0, k=1.0)
    sys = assemble_three_field(mesh, coeffs)
    return sys, assemble_precon_blocks(mesh, coeffs, sys.spaces, sys.geometry)


@pytest.fixture(scope="session")
def tc1_system_8():
    sol = exact_solution_tc1(alpha=1.0)
    mesh = build_unit_square_mesh(8)
    sys = assemble_three_field(mesh, sol.coeffs, sol)
    return sol, sys, assemble_precon_blocks(mesh, sol.coeffs, sys.spaces, sys.geometry)
