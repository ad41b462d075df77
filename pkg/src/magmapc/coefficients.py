"""Coefficient fields: viscosities, permeability and porosity.

Fields are pointwise evaluators ``f(x, z) -> array`` that accept arrays of
coordinates, so assembly can sample them directly at quadrature points.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import DegenerateModelError

Field = Callable[[np.ndarray, np.ndarray], np.ndarray]

TANH5 = math.tanh(5.0)


def constant(value: float) -> Field:
    def f(x, z):
        return np.full(np.broadcast(x, z).shape, float(value))
    return f


@dataclass(frozen=True)
class CoefficientModel:
    """Shear viscosity, inverse bulk viscosity, permeability and porosity.

    ``zeta_inv`` may vanish only when ``allow_zero_zeta_inv`` is set; the
    discrete problem then loses its stability guarantee.
    """

    eta: Field
    zeta_inv: Field
    k: Field
    phi: Field
    e3: tuple[float, float] = (0.0, 1.0)
    allow_zero_zeta_inv: bool = False
    conditioning_threshold: float = 1e12

    def zeta(self, x, z):
        with np.errstate(divide="ignore"):
            return 1.0 / self.zeta_inv(x, z)

    def sample(self, x, z) -> dict[str, np.ndarray]:
        """Evaluate every field and check the model invariants at the given points."""
        vals = {
            "eta": np.asarray(self.eta(x, z), dtype=float),
            "zeta_inv": np.asarray(self.zeta_inv(x, z), dtype=float),
            "k": np.asarray(self.k(x, z), dtype=float),
            "phi": np.asarray(self.phi(x, z), dtype=float),
        }
        if not np.all(vals["eta"] > 0):
            raise DegenerateModelError("shear viscosity must be positive")
        if not np.all(vals["k"] >= 0):
            raise DegenerateModelError("permeability must be non-negative")
        zi = vals["zeta_inv"]
        if np.any(zi < 0) or np.any(np.isnan(zi)):
            raise DegenerateModelError("inverse bulk viscosity must be non-negative")
        if not self.allow_zero_zeta_inv and np.any(zi == 0):
            raise DegenerateModelError(
                "inverse bulk viscosity vanishes; pass allow_zero_zeta_inv=True to proceed")
        self._check_conditioning(vals["k"], zi)
        return vals

    def _check_conditioning(self, k, zeta_inv):
        # the pressure rows approach linear dependence as k -> 0 while zeta grows
        kmin = float(np.min(k)) if k.size else 0.0
        zimin = float(np.min(zeta_inv)) if zeta_inv.size else 0.0
        if zimin > 0 and kmin > 0:
            ratio = 1.0 / (kmin * zimin)
        else:
            ratio = math.inf
        if ratio > self.conditioning_threshold:
            warnings.warn(
                f"min(k)*min(1/zeta) = {1.0 / ratio if ratio else 0:.3e}: pressure "
                "equations close to degenerate", RuntimeWarning, stacklevel=3)


def constant_model(eta: float = 1.0, zeta: float = 4.0 / 3.0, k: float | Field = 1.0,
                   phi: float = 0.0) -> CoefficientModel:
    kf = k if callable(k) else constant(k)
    return CoefficientModel(eta=constant(eta), zeta_inv=constant(1.0 / zeta), k=kf,
                            phi=constant(phi))


def alpha_model(alpha: float, k_star: float = 0.5, k_superstar: float = 1.5,
                zeta_floor: float = 0.0) -> CoefficientModel:
    """Constant viscosity test case: eta = 1, zeta = alpha + 1/3, tanh permeability.

    ``alpha = -1/3`` gives zeta = 0, i.e. an infinite ``zeta_inv``; that is
    usable by the two-field formulation only.  The three-field formulation
    needs a finite ``zeta_inv``, which ``zeta_floor > 0`` provides by using
    ``zeta = max(alpha + 1/3, zeta_floor)``.
    """
    zeta = alpha + 1.0 / 3.0
    if zeta < -1e-14:
        raise DegenerateModelError(f"alpha={alpha} gives negative bulk viscosity")
    zeta = max(zeta, zeta_floor, 0.0)
    kf = lambda x, z: manufactured_permeability(x, z, k_star, k_superstar)  # noqa: E731
    if zeta == 0.0:
        return CoefficientModel(eta=constant(1.0), zeta_inv=constant(math.inf), k=kf,
                                phi=constant(0.0))
    return constant_model(eta=1.0, zeta=zeta, k=kf)


# -- manufactured permeability -------------------------------------------------

def manufactured_permeability(x, z, k_star: float, k_superstar: float):
    """tanh ramp permeability running from ``k_star`` (near the origin) to ``k_superstar``.

    The published expression carries a (k* - k_*) denominator that cancels
    against its numerator; the cancelled form below is used so that
    ``k_star == k_superstar`` gives the constant field.
    """
    amp = (k_superstar - k_star) / (4.0 * TANH5)
    return amp * (np.tanh(10 * np.asarray(x) - 5) + np.tanh(10 * np.asarray(z) - 5)) \
        + 0.5 * (k_star + k_superstar)


def manufactured_permeability_verbatim(x, z, k_star: float, k_superstar: float):
    """The uncancelled expression; undefined for ``k_star == k_superstar``."""
    d = k_superstar - k_star
    inner = (np.tanh(10 * np.asarray(x) - 5) + np.tanh(10 * np.asarray(z) - 5)
             + (2 * d - 2 * TANH5 * (k_star + k_superstar)) / (k_star - k_superstar) + 2)
    return d / (4 * TANH5) * inner


def permeability_jet(x, z, k_star: float, k_superstar: float):
    """Value, gradient and Hessian of :func:`manufactured_permeability`."""
    amp = (k_superstar - k_star) / (4.0 * TANH5)
    tx, tz = np.tanh(10 * x - 5), np.tanh(10 * z - 5)
    sx, sz = 1 - tx**2, 1 - tz**2
    val = amp * (tx + tz) + 0.5 * (k_star + k_superstar)
    grad = (amp * 10 * sx, amp * 10 * sz)
    hess = (amp * -200 * tx * sx, np.zeros_like(val), amp * -200 * tz * sz)
    return val, grad, hess


# -- manufactured porosity -----------------------------------------------------

PORO_ANGLE = math.pi / 6


def manufactured_porosity(x, z, phi_star: float, phi_superstar: float):
    s = np.asarray(x) * math.sin(PORO_ANGLE) + np.asarray(z) * math.cos(PORO_ANGLE)
    return 0.5 * (phi_star + phi_superstar) + 0.5 * (phi_superstar - phi_star) * np.cos(4 * math.pi * s)


def porosity_jet(x, z, phi_star: float, phi_superstar: float):
    a, b = math.sin(PORO_ANGLE), math.cos(PORO_ANGLE)
    w = 4 * math.pi
    s = x * a + z * b
    amp = 0.5 * (phi_superstar - phi_star)
    c, sn = np.cos(w * s), np.sin(w * s)
    val = 0.5 * (phi_star + phi_superstar) + amp * c
    d1 = -amp * w * sn
    d2 = -amp * w * w * c
    return val, (d1 * a, d1 * b), (d2 * a * a, d2 * a * b, d2 * b * b)


# -- constitutive laws -----------------------------------------------------------

@dataclass(frozen=True)
class ConstitutiveParams:
    m: float = 2.0
    lam: float = 27.0
    r_zeta: float = 5.0 / 3.0
    R: float = 0.1
    phi0: float = 0.05
    zeta_inv_cutoff: float | None = None

    def __post_init__(self):
        if not (self.r_zeta > 0 and self.R > 0 and self.phi0 > 0):
            raise ValueError("r_zeta, R and phi0 must be positive")
        if self.zeta_inv_cutoff is not None and self.zeta_inv_cutoff < 0:
            raise ValueError("zeta_inv_cutoff must be non-negative")

    @property
    def k_prefactor(self) -> float:
        return self.R**2 / (self.r_zeta + 4.0 / 3.0)

    # scalar laws of the porosity, with first/second derivatives
    def k_of_phi(self, phi, order: int = 0):
        c, m, p0 = self.k_prefactor, self.m, self.phi0
        phi = np.asarray(phi, dtype=float)
        if order == 0:
            return c * (phi / p0) ** m
        if order == 1:
            return c * m / p0 * (phi / p0) ** (m - 1)
        return c * m * (m - 1) / p0**2 * (phi / p0) ** (m - 2)

    def eta_of_phi(self, phi, order: int = 0):
        e = 2.0 * np.exp(-self.lam * (np.asarray(phi, dtype=float) - self.phi0))
        return e * (-self.lam) ** order

    def zeta_inv_of_phi(self, phi):
        """Inverse bulk viscosity, with the piecewise cutoff when one is set."""
        zi = np.asarray(phi, dtype=float) / (self.r_zeta * self.phi0)
        if self.zeta_inv_cutoff is not None:
            zi = np.where(zi > self.zeta_inv_cutoff, zi, self.zeta_inv_cutoff)
        return zi


def constitutive_fields(params: ConstitutiveParams, phi: Field,
                        allow_zero_zeta_inv: bool = False) -> CoefficientModel:
    """Porosity-dependent k, eta and 1/zeta."""
    return CoefficientModel(
        eta=lambda x, z: params.eta_of_phi(phi(x, z)),
        zeta_inv=lambda x, z: params.zeta_inv_of_phi(phi(x, z)),
        k=lambda x, z: params.k_of_phi(phi(x, z)),
        phi=phi,
        allow_zero_zeta_inv=allow_zero_zeta_inv,
    )


def porosity_model(params: ConstitutiveParams, phi_star: float, phi_superstar: float = 0.3,
                   allow_zero_zeta_inv: bool | None = None) -> CoefficientModel:
    """Variable viscosity test case on the cosine porosity field."""
    if not 0 <= phi_star <= phi_superstar <= 1:
        raise ValueError("need 0 <= phi_star <= phi_superstar <= 1")
    if allow_zero_zeta_inv is None:
        allow_zero_zeta_inv = False
    if phi_star == 0 and params.zeta_inv_cutoff in (None, 0) and not allow_zero_zeta_inv:
        raise DegenerateModelError(
            "phi_star = 0 without a cutoff makes 1/zeta vanish; opt in explicitly")
    return constitutive_fields(
        params, lambda x, z: manufactured_porosity(x, z, phi_star, phi_superstar),
        allow_zero_zeta_inv=allow_zero_zeta_inv)


# -- non-dimensionalisation ------------------------------------------------------

@dataclass(frozen=True)
class DimensionalScales:
    eta0: float
    zeta0: float
    k0: float
    mu: float
    delta_rho: float
    g: float
    H: float

    def __post_init__(self):
        for name in ("eta0", "zeta0", "k0", "mu", "delta_rho", "g", "H"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    @property
    def r_zeta(self) -> float:
        return self.zeta0 / self.eta0

    @property
    def delta(self) -> float:
        """Reference compaction length."""
        return math.sqrt((self.r_zeta + 4.0 / 3.0) * self.eta0 * self.k0 / self.mu)

    @property
    def u0(self) -> float:
        return self.delta_rho * self.g * self.H**2 / self.eta0

    @property
    def p0(self) -> float:
        return self.delta_rho * self.g * self.H


@dataclass(frozen=True)
class NondimReport:
    r_zeta: float
    R: float
    delta: float
    u0: float
    p_scale: float
    k_factor: float
    eta_factor: float = 2.0

    def rescale(self, k, eta, zeta):
        """Fold the prefactors into nondimensional k', eta', zeta'."""
        return self.k_factor * k, self.eta_factor * eta, self.r_zeta * zeta


def nondimensionalize(scales: DimensionalScales, m: float = 2.0, lam: float = 27.0,
                      phi0: float = 0.05) -> tuple[ConstitutiveParams, NondimReport]:
    r = scales.r_zeta
    R = scales.delta / scales.H
    params = ConstitutiveParams(m=m, lam=lam, r_zeta=r, R=R, phi0=phi0)
    report = NondimReport(r_zeta=r, R=R, delta=scales.delta, u0=scales.u0,
                          p_scale=scales.p0, k_factor=R**2 / (r + 4.0 / 3.0))
    return params, report
