import math
import warnings

import numpy as np
import pytest

from magmapc import DegenerateModelError
from magmapc.coefficients import (CoefficientModel, ConstitutiveParams, DimensionalScales,
                                  alpha_model, constant, constant_model, constitutive_fields,
                                  manufactured_permeability, manufactured_permeability_verbatim,
                                  manufactured_porosity, nondimensionalize, permeability_jet,
                                  porosity_jet, porosity_model)


GRID = np.meshgrid(np.linspace(0, 1, 101), np.linspace(0, 1, 101))


def test_permeability_midpoint_closed_form():
    # both tanh terms vanish at the centre, leaving the mean of the bounds
    assert manufactured_permeability(0.5, 0.5, 0.5, 1.5) == pytest.approx(1.0, abs=1e-15)


def test_permeability_matches_uncancelled_expression():
    x, z = GRID
    np.testing.assert_allclose(manufactured_permeability(x, z, 0.5, 1.5),
                               manufactured_permeability_verbatim(x, z, 0.5, 1.5), rtol=1e-13)


def test_permeability_equal_bounds_is_constant():
    x, z = GRID
    np.testing.assert_array_equal(manufactured_permeability(x, z, 0.7, 0.7), 0.7)


def test_permeability_range_on_dense_grid():
    k = manufactured_permeability(*GRID, 0.5, 1.5)
    assert k.min() >= 0.5 - 1e-6 and k.max() <= 1.5 + 1e-6
    assert k[0, 0] == pytest.approx(0.5, abs=1e-12)
    assert k[-1, -1] == pytest.approx(1.5, abs=1e-12)


@pytest.mark.parametrize("jet, args", [(permeability_jet, (0.5, 1.5)),
                                       (porosity_jet, (1e-3, 0.3))])
def test_jets_match_finite_differences(jet, args, rng):
    pts = rng.uniform(0.05, 0.95, size=(50, 2))
    x, z = pts.T
    v, g, H = jet(x, z, *args)
    h = 1e-5
    for axis in range(2):
        dx, dz = (h, 0) if axis == 0 else (0, h)
        vp, gp, _ = jet(x + dx, z + dz, *args)
        vm, gm, _ = jet(x - dx, z - dz, *args)
        np.testing.assert_allclose(g[axis], (vp - vm) / (2 * h), atol=1e-6)
        hess = [(gp[i] - gm[i]) / (2 * h) for i in range(2)]
        idx = (0, 1) if axis == 0 else (1, 2)
        np.testing.assert_allclose(H[idx[0]], hess[0], atol=1e-4 * np.abs(H[idx[0]]).max() + 1e-6)
        np.testing.assert_allclose(H[idx[1]], hess[1], atol=1e-4 * np.abs(H[idx[1]]).max() + 1e-6)


def test_porosity_examples():
    assert manufactured_porosity(0.0, 0.0, 0.0, 0.3) == pytest.approx(0.3)
    x, z = GRID
    phi = manufactured_porosity(x, z, 0.0, 0.3)
    assert phi.min() >= 0.0 and phi.max() <= 0.3 + 1e-15
    np.testing.assert_allclose(manufactured_porosity(x, z, 0.2, 0.2), 0.2, atol=1e-15)


def test_constitutive_values_at_reference_porosity():
    p = ConstitutiveParams()
    assert float(p.eta_of_phi(p.phi0)) == pytest.approx(2.0)
    assert 1.0 / float(p.zeta_inv_of_phi(p.phi0)) == pytest.approx(p.r_zeta)
    assert float(p.k_of_phi(p.phi0)) == pytest.approx(0.01 / (5 / 3 + 4 / 3))


def test_default_parameter_set():
    p = ConstitutiveParams()
    assert (p.m, p.lam, p.r_zeta, p.R, p.phi0) == (2.0, 27.0, 5.0 / 3.0, 0.1, 0.05)


def test_cutoff_is_piecewise():
    p = ConstitutiveParams(zeta_inv_cutoff=1e-4)
    assert float(p.zeta_inv_of_phi(0.0)) == 1e-4
    assert float(p.zeta_inv_of_phi(1e-7)) == 1e-4
    assert float(p.zeta_inv_of_phi(0.05)) == pytest.approx(1 / p.r_zeta)


def test_constitutive_derivatives():
    p = ConstitutiveParams()
    phi, h = 0.07, 1e-6
    assert float(p.k_of_phi(phi, 1)) == pytest.approx(
        (p.k_of_phi(phi + h) - p.k_of_phi(phi - h)) / (2 * h), rel=1e-7)
    assert float(p.k_of_phi(phi, 2)) == pytest.approx(
        (p.k_of_phi(phi, 1) - p.k_of_phi(phi - h, 1)) / h, rel=1e-5)
    assert float(p.eta_of_phi(phi, 1)) == pytest.approx(
        (p.eta_of_phi(phi + h) - p.eta_of_phi(phi - h)) / (2 * h), rel=1e-7)


@pytest.mark.parametrize("kwargs", [dict(r_zeta=0), dict(R=-1), dict(phi0=0),
                                    dict(zeta_inv_cutoff=-1.0)])
def test_constitutive_param_validation(kwargs):
    with pytest.raises(ValueError):
        ConstitutiveParams(**kwargs)


def test_constitutive_fields_satisfy_invariants():
    params = ConstitutiveParams()
    x, z = GRID
    for phi_value in np.geomspace(1e-8, 1.0, 9):
        model = constitutive_fields(params, constant(phi_value))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            vals = model.sample(x, z)
        assert np.all(vals["eta"] > 0) and np.all(vals["zeta_inv"] >= 0) and np.all(vals["k"] >= 0)
        assert np.all((vals["phi"] >= 0) & (vals["phi"] <= 1))


def test_constant_porosity_matches_alpha_parameterisation(rng):
    params = ConstitutiveParams()
    for phi in rng.uniform(0.01, 0.3, size=10):
        m = constitutive_fields(params, constant(phi))
        eta, zeta = float(m.eta(0.3, 0.3)), float(m.zeta(0.3, 0.3))
        alpha = zeta / eta - 1.0 / 3.0
        ref = alpha_model(alpha)
        # with eta scaled to 1 the grad-div coefficient (zeta - eta/3) / eta is alpha
        assert (zeta - eta / 3) / eta == pytest.approx(float(ref.zeta(0.3, 0.3)) - 1 / 3, rel=1e-12)


def test_zero_porosity_needs_opt_in():
    with pytest.raises(DegenerateModelError):
        porosity_model(ConstitutiveParams(), 0.0)
    model = porosity_model(ConstitutiveParams(), 0.0, allow_zero_zeta_inv=True)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        assert model.sample(np.array([0.5]), np.array([0.5]))["zeta_inv"].min() >= 0
    # a positive cutoff removes the degeneracy
    porosity_model(ConstitutiveParams(zeta_inv_cutoff=1e-4), 0.0)


def test_zero_zeta_inv_rejected_without_flag():
    model = CoefficientModel(eta=constant(1), zeta_inv=constant(0), k=constant(1), phi=constant(0))
    with pytest.raises(DegenerateModelError):
        model.sample(np.zeros(3), np.zeros(3))


def test_invalid_models_rejected():
    bad_eta = constant_model(eta=-1.0)
    with pytest.raises(DegenerateModelError):
        bad_eta.sample(np.zeros(2), np.zeros(2))
    with pytest.raises(DegenerateModelError):
        constant_model(k=-1.0).sample(np.zeros(2), np.zeros(2))


def test_conditioning_warning():
    model = constant_model(zeta=1e8, k=1e-6)
    with pytest.warns(RuntimeWarning, match="degenerate"):
        model.sample(np.zeros(2), np.zeros(2))


def test_alpha_model():
    assert float(alpha_model(1.0).zeta(0.2, 0.2)) == pytest.approx(4 / 3)
    degenerate = alpha_model(-1.0 / 3.0)
    assert math.isinf(float(degenerate.zeta_inv(0.1, 0.1)))
    floored = alpha_model(-1.0 / 3.0, zeta_floor=1e-8)
    assert float(floored.zeta(0.1, 0.1)) == pytest.approx(1e-8)
    with pytest.raises(DegenerateModelError):
        alpha_model(-1.0)


def _scales(**kw):
    base = dict(eta0=1.0, zeta0=5 / 3, k0=1.0, mu=1.0, delta_rho=1.0, g=1.0, H=1.0)
    base.update(kw)
    return DimensionalScales(**base)


def test_compaction_length_example():
    assert _scales().delta == pytest.approx(math.sqrt(3.0), rel=1e-12)


def test_nondimensional_scaling_laws():
    _, r1 = nondimensionalize(_scales(eta0=2.0, zeta0=2.0))
    assert r1.r_zeta == 1.0
    _, a = nondimensionalize(_scales())
    _, b = nondimensionalize(_scales(H=2.0))
    assert b.R == pytest.approx(a.R / 2)
    assert b.u0 == pytest.approx(4 * a.u0)
    # scaling both viscosities together leaves r_zeta alone
    _, c = nondimensionalize(_scales(eta0=7.0, zeta0=7.0 * 5 / 3))
    assert c.r_zeta == pytest.approx(a.r_zeta)


def test_nondimensional_rescale():
    params, rep = nondimensionalize(_scales())
    k, eta, zeta = rep.rescale(1.0, 1.0, 1.0)
    assert k == pytest.approx(params.k_prefactor)
    assert eta == 2.0 and zeta == pytest.approx(5 / 3)


def test_non_positive_scale_rejected():
    with pytest.raises(ValueError):
        _scales(mu=0.0)
