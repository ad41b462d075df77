"""Experiment harness: iteration sweeps, convergence studies and spectral checks.

A sweep visits every (mesh, parameter) cell of an :class:`ExperimentConfig`,
assembles the system, builds the preconditioner and runs the Krylov solver.
Failures inside a cell are recorded as breakdown rows instead of aborting.
"""
from __future__ import annotations

import configparser
import csv
import io
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import DegenerateModelError, SingularMatrixError
from .assembly import (assemble_precon_blocks, assemble_three_field, assemble_two_field,
                       export_matrix_market, l2_errors, pressure_mass)
from .coefficients import constant_model
from .krylov import ConstantPressure, KrylovConfig, SolveReport, solve
from .manufactured import exact_solution_tc1, exact_solution_tc2
from .mesh import build_unit_square_mesh
from . import precond, spectral

log = logging.getLogger(__name__)

TEST_CASES = ("tc1-constant-viscosity", "tc2-variable-viscosity")
FORMULATIONS = ("two-field", "three-field")
DEFAULT_MAX_N = 128
HARD_MAX_N = 256
# bulk viscosity used for alpha = -1/3 in the three-field formulation, where zeta = 0
# would make 1/zeta infinite; the compaction pressure then decouples to O(zeta)
ZETA_FLOOR = 1e-8


class ConfigError(ValueError):
    """Invalid experiment configuration."""


@dataclass(frozen=True)
class ExperimentConfig:
    test_case: str
    mesh_sizes: tuple[int, ...]
    parameters: tuple[float, ...]
    formulation: str = "three-field"
    preconditioner: str = "diagonal"
    solver: KrylovConfig = field(default_factory=KrylovConfig)
    output_dir: str = "results"
    sigma: float = 0.5
    k_star: float = 0.5
    k_superstar: float = 1.5
    phi_superstar: float = 0.3
    allow_large_meshes: bool = False

    def __post_init__(self):
        if self.test_case not in TEST_CASES:
            raise ConfigError(f"test_case must be one of {TEST_CASES}, got {self.test_case!r}")
        if self.formulation not in FORMULATIONS:
            raise ConfigError(f"formulation must be one of {FORMULATIONS}")
        if not self.mesh_sizes:
            raise ConfigError("mesh_sizes must not be empty")
        if not self.parameters:
            raise ConfigError("parameter list must not be empty")
        if self.preconditioner not in precond.KINDS:
            raise ConfigError(f"preconditioner must be one of {precond.KINDS}")
        if (self.formulation == "two-field") != (self.preconditioner == "two-field"):
            raise ConfigError("the two-field preconditioner goes with the two-field formulation")
        if self.solver.method == "minres" and self.preconditioner not in ("diagonal", "two-field"):
            raise ConfigError("MINRES needs a symmetric positive definite preconditioner")
        cap = HARD_MAX_N if self.allow_large_meshes else DEFAULT_MAX_N
        for n in self.mesh_sizes:
            if not 1 <= n <= cap:
                raise ConfigError(f"n_side={n} outside [1, {cap}]")
        if self.test_case == "tc2-variable-viscosity" and any(
                not 0 <= p <= self.phi_superstar for p in self.parameters):
            raise ConfigError("phi_star values must lie in [0, phi_superstar]")

    @property
    def parameter_name(self) -> str:
        return "alpha" if self.test_case.startswith("tc1") else "phi_star"

    @property
    def tag(self) -> str:
        return f"{self.test_case.split('-')[0]}_{self.formulation}_{self.preconditioner}_{self.solver.method}"


def _parse_number(text: str) -> float:
    text = text.strip().replace("−", "-")
    try:
        return float(text)
    except ValueError:
        return float(Fraction(text))


def _parse_list(text: str, conv) -> tuple:
    return tuple(conv(t) for t in text.replace(";", ",").split(",") if t.strip())


def parse_config(text: str) -> ExperimentConfig:
    """Read an INI-style experiment description with ``[experiment]`` and ``[solver]`` sections."""
    cp = configparser.ConfigParser()
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    if "experiment" not in cp:
        raise ConfigError("missing [experiment] section")
    ex = cp["experiment"]
    sv = cp["solver"] if "solver" in cp else {}
    try:
        solver = KrylovConfig(
            method=sv.get("method", "minres"),
            restart=int(sv.get("restart", 100)),
            rel_tol=float(sv.get("rel_tol", 1e-8)),
            max_iters=int(sv.get("max_iters", 1000)),
            residual_kind=sv.get("residual_kind", "true"),
            project_nullspace=str(sv.get("project_nullspace", "yes")).lower() in ("1", "yes", "true", "on"),
        )
        params = ex.get("parameters") or ex.get("alpha") or ex.get("phi_star") or ""
        return ExperimentConfig(
            test_case=ex.get("test_case", "tc1-constant-viscosity"),
            mesh_sizes=_parse_list(ex.get("mesh_sizes", ""), int),
            parameters=_parse_list(params, _parse_number),
            formulation=ex.get("formulation", "three-field"),
            preconditioner=ex.get("preconditioner", "diagonal"),
            solver=solver,
            output_dir=ex.get("output_dir", "results"),
            sigma=float(ex.get("sigma", 0.5)),
            k_star=float(ex.get("k_star", 0.5)),
            k_superstar=float(ex.get("k_superstar", 1.5)),
            phi_superstar=float(ex.get("phi_superstar", 0.3)),
            allow_large_meshes=ex.getboolean("allow_large_meshes", False),
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path: str | os.PathLike) -> ExperimentConfig:
    return parse_config(Path(path).read_text())


# -- single cells ----------------------------------------------------------------

@dataclass
class ResultRow:
    n_side: int
    parameter: float
    formulation: str
    preconditioner: str
    method: str
    iterations: int | None
    converged: bool
    breakdown_reason: str | None
    wall_time: float
    err_ux: float = math.nan
    err_uz: float = math.nan
    err_p: float = math.nan

    @property
    def table_entry(self) -> str:
        return str(self.iterations) if self.converged else "-"


def exact_solution(cfg: ExperimentConfig, param: float):
    if cfg.test_case.startswith("tc1"):
        floor = ZETA_FLOOR if cfg.formulation == "three-field" else 0.0
        return exact_solution_tc1(cfg.k_star, cfg.k_superstar, alpha=param, zeta_floor=floor)
    return exact_solution_tc2(phi_star=param, phi_superstar=cfg.phi_superstar,
                              allow_zero_zeta_inv=(param == 0))


def setup_cell(cfg: ExperimentConfig, n_side: int, param: float):
    """Assemble the system and build the preconditioner of one cell."""
    sol = exact_solution(cfg, param)
    mesh = build_unit_square_mesh(n_side)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        if cfg.formulation == "two-field":
            sys = assemble_two_field(mesh, sol.coeffs, sol)
        else:
            sys = assemble_three_field(mesh, sol.coeffs, sol)
        blocks = assemble_precon_blocks(mesh, sol.coeffs, sys.spaces, sys.geometry)
    pc = precond.build(cfg.preconditioner, sys, blocks, cfg.sigma)
    Q = pressure_mass(mesh, sys.spaces, sys.geometry)
    ns = ConstantPressure(sys.pressure_slice(), np.asarray(Q.sum(axis=1)).ravel())
    return sol, sys, pc, ns


def run_cell(cfg: ExperimentConfig, n_side: int, param: float,
             with_errors: bool = True) -> tuple[ResultRow, SolveReport | None, np.ndarray | None]:
    """Solve one cell; setup failures become a breakdown row."""
    base = dict(n_side=n_side, parameter=param, formulation=cfg.formulation,
                preconditioner=cfg.preconditioner, method=cfg.solver.method)
    try:
        sol, sys, pc, ns = setup_cell(cfg, n_side, param)
    except (DegenerateModelError, SingularMatrixError, ArithmeticError, MemoryError) as exc:
        log.warning("cell n=%d %s=%g failed during setup: %s", n_side, cfg.parameter_name, param, exc)
        return ResultRow(**base, iterations=None, converged=False,
                         breakdown_reason=f"setup-failure: {type(exc).__name__}",
                         wall_time=0.0), None, None
    x, rep = solve(sys.matrix(), pc, sys.rhs(), cfg.solver, ns)
    row = ResultRow(**base, iterations=rep.iterations if rep.converged else None,
                    converged=rep.converged, breakdown_reason=rep.breakdown_reason,
                    wall_time=rep.wall_time)
    if with_errors and rep.converged:
        u, p = sys.split(x)[:2]
        row.err_ux, row.err_uz, row.err_p = l2_errors(sys.spaces, u, p, sol)
    return row, rep, x


def _run_cell_row(args):
    cfg, n, param = args
    return run_cell(cfg, n, param)[0]


# -- sweeps -------------------------------------------------------------------------

def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return "" if math.isnan(v) else f"{v:.6g}"
    return str(v)


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    names = list(asdict(rows[0]).keys()) if rows else [f.name for f in ResultRow.__dataclass_fields__.values()]
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(names)
    for r in rows:
        w.writerow([_fmt(v) for v in asdict(r).values()])
    return buf.getvalue()


def rows_to_table(rows: list[ResultRow], cfg: ExperimentConfig) -> str:
    """Table layout: one line per n_side, one column per parameter value, '-' for failures."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n_side"] + [f"{cfg.parameter_name}={_fmt(float(p))}" for p in cfg.parameters])
    lookup = {(r.n_side, r.parameter): r for r in rows}
    for n in cfg.mesh_sizes:
        w.writerow([n] + [lookup[(n, p)].table_entry for p in cfg.parameters])
    return buf.getvalue()


def run_iteration_sweep(cfg: ExperimentConfig, write: bool = True, workers: int = 1,
                        emit_mm: bool = False) -> list[ResultRow]:
    """Iteration counts for every (n_side, parameter) cell; writes long and table CSVs."""
    if max(cfg.mesh_sizes) > DEFAULT_MAX_N:
        warnings.warn(f"n_side up to {max(cfg.mesh_sizes)} requested; expect long runtimes",
                      RuntimeWarning, stacklevel=2)
    cells = [(cfg, n, p) for n in cfg.mesh_sizes for p in cfg.parameters]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_cell_row, cells))
    else:
        rows = [_run_cell_row(c) for c in cells]
    if write:
        out = Path(cfg.output_dir)
        _atomic_write(out / f"sweep_{cfg.tag}.csv", rows_to_csv(rows))
        _atomic_write(out / f"table_{cfg.tag}.csv", rows_to_table(rows, cfg))
        if emit_mm:
            for n, p in ((n, p) for n in cfg.mesh_sizes for p in cfg.parameters):
                emit_matrix_market(cfg, n, p, out / "mm" / f"{cfg.tag}_n{n}_{cfg.parameter_name}{p:g}")
    return rows


@dataclass
class ConvergenceRow:
    tolerance: float
    n_side: int
    iterations: int | None
    errors: tuple[float, float, float]
    rates: tuple[float, float, float] | None


def convergence_rates(errors: list[tuple[float, ...]]) -> list[tuple[float, ...] | None]:
    """log2(e_2h / e_h) between consecutive meshes of a halving sequence."""
    out = [None]
    for coarse, fine in zip(errors[:-1], errors[1:]):
        out.append(tuple(math.log2(c / f) if c > 0 and f > 0 else math.nan
                         for c, f in zip(coarse, fine)))
    return out[:len(errors)]


def run_convergence_study(cfg: ExperimentConfig, tolerances, write: bool = True,
                          residual_kind: str | None = None) -> list[ConvergenceRow]:
    """L2 errors and rates for each stopping tolerance at the first parameter value."""
    param = cfg.parameters[0]
    rows: list[ConvergenceRow] = []
    for tol in tolerances:
        solver = replace(cfg.solver, rel_tol=float(tol),
                         residual_kind=residual_kind or cfg.solver.residual_kind)
        c = replace(cfg, solver=solver)
        errs, its = [], []
        for n in cfg.mesh_sizes:
            row = run_cell(c, n, param)[0]
            errs.append((row.err_ux, row.err_uz, row.err_p))
            its.append(row.iterations)
        for n, it, e, r in zip(cfg.mesh_sizes, its, errs, convergence_rates(errs)):
            rows.append(ConvergenceRow(float(tol), n, it, e, r))
    if write:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["tolerance", "n_side", "iterations", "err_ux", "rate_ux",
                    "err_uz", "rate_uz", "err_p", "rate_p"])
        for r in rows:
            rates = r.rates or (None, None, None)
            w.writerow([f"{r.tolerance:g}", r.n_side, _fmt(r.iterations)]
                       + [x for pair in zip(r.errors, rates) for x in (_fmt(pair[0]), _fmt(pair[1]))])
        _atomic_write(Path(cfg.output_dir) / f"convergence_{cfg.tag}.csv", buf.getvalue())
    return rows


# -- spectra ------------------------------------------------------------------------

@dataclass
class SpectrumCheck:
    n_side: int
    sigma: float
    alpha: float
    theoretical: spectral.SpectrumReport
    triangular_extremes: tuple[float, float]
    schur_mass_extremes: tuple[float, float]


def run_spectrum_check(n_side: int, sigma: float = 0.5, alpha: float = 1.0,
                       variable_k: bool = False) -> SpectrumCheck:
    """Dense spectra of the theoretical and practical triangular preconditioners.

    Uses constant coefficients eta = 1, zeta = alpha + 1/3 and k = 1 (or the
    tanh permeability with ``variable_k``).
    """
    zeta = alpha + 1.0 / 3.0
    if zeta <= 0:
        raise ConfigError("spectral checks need alpha > -1/3")
    if variable_k:
        coeffs = exact_solution_tc1(alpha=alpha).coeffs
    else:
        coeffs = constant_model(eta=1.0, zeta=zeta, k=1.0)
    mesh = build_unit_square_mesh(n_side)
    sys = assemble_three_field(mesh, coeffs)
    n = sum(sys.sizes)
    if n > spectral.DENSE_SIZE_CAP:
        raise ConfigError(f"system of size {n} exceeds the dense cap {spectral.DENSE_SIZE_CAP}")
    blocks = assemble_precon_blocks(mesh, coeffs, sys.spaces, sys.geometry)
    theo = spectral.theoretical_spectrum(sys, sigma)
    tri = spectral.triangular_spectrum(sys, blocks)
    sm = spectral.schur_mass_eigenvalues(sys)
    return SpectrumCheck(n_side, sigma, alpha, theo, tri.extremes, (float(sm[0]), float(sm[-1])))


# -- export -------------------------------------------------------------------------

def emit_matrix_market(cfg: ExperimentConfig, n_side: int, param: float, outdir) -> list[Path]:
    if cfg.formulation != "three-field":
        raise ConfigError("Matrix Market export covers the three-field system")
    sol = exact_solution(cfg, param)
    mesh = build_unit_square_mesh(n_side)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        sys = assemble_three_field(mesh, sol.coeffs, sol)
        blocks = assemble_precon_blocks(mesh, sol.coeffs, sys.spaces, sys.geometry)
    return export_matrix_market(sys, outdir, blocks)


def write_history(report: SolveReport, path_stem) -> tuple[Path, Path]:
    """Residual history as CSV plus a whitespace-separated file for gnuplot."""
    stem = Path(path_stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path = stem.with_suffix(".csv")
    report.to_csv(csv_path)
    dat_path = stem.with_suffix(".dat")
    with open(dat_path, "w") as fh:
        fh.write("# iteration true_residual preconditioned_residual\n")
        for i, r in enumerate(report.residual_history):
            pr = report.precond_history[i] if i < len(report.precond_history) else math.nan
            fh.write(f"{i} {r:.10e} {pr:.10e}\n")
    return csv_path, dat_path

