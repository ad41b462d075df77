"""Command-line entry point: ``magmapc {sweep,converge,spectrum,export-mm,solve-one}``."""
from __future__ import annotations

import argparse
import csv
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, bench


def _apply_overrides(cfg: bench.ExperimentConfig, args) -> bench.ExperimentConfig:
    solver = cfg.solver
    if getattr(args, "tol", None) is not None and not isinstance(args.tol, list):
        solver = replace(solver, rel_tol=args.tol)
    if getattr(args, "residual", None):
        solver = replace(solver, residual_kind=args.residual)
    cfg = replace(cfg, solver=solver)
    if getattr(args, "out", None):
        cfg = replace(cfg, output_dir=str(args.out))
    return cfg


def _set_threads(n: int | None) -> None:
    # only effective for BLAS libraries initialised after this point
    if n:
        for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
            os.environ[var] = str(n)


def cmd_sweep(args) -> int:
    cfg = _apply_overrides(bench.load_config(args.config), args)
    rows = bench.run_iteration_sweep(cfg, workers=args.threads or 1, emit_mm=args.emit_mm)
    print(bench.rows_to_table(rows, cfg), end="")
    return 0


def cmd_converge(args) -> int:
    cfg = _apply_overrides(bench.load_config(args.config), args)
    tols = args.tol or [1e-10, 1e-5]
    rows = bench.run_convergence_study(cfg, tols, residual_kind=args.residual)
    for r in rows:
        rates = " ".join(f"{x:5.2f}" for x in r.rates) if r.rates else ""
        errs = " ".join(f"{e:.3e}" for e in r.errors)
        print(f"tol={r.tolerance:g} n={r.n_side:4d} its={r.iterations} {errs} {rates}")
    return 0


def cmd_spectrum(args) -> int:
    chk = bench.run_spectrum_check(args.n_side, args.sigma, args.alpha)
    th = chk.theoretical
    print(f"theoretical: clusters {th.clusters}, radius {th.radius:.3e}")
    print(f"triangular:  extremes [{chk.triangular_extremes[0]:.6f}, {chk.triangular_extremes[1]:.6f}]")
    print(f"schur/mass:  extremes [{chk.schur_mass_extremes[0]:.6f}, {chk.schur_mass_extremes[1]:.6f}]")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        np.savetxt(out / f"theoretical_n{args.n_side}_sigma{args.sigma:g}.txt", th.eigenvalues)
    return 0


def cmd_export(args) -> int:
    cfg = _apply_overrides(bench.load_config(args.config), args)
    n = args.n_side or cfg.mesh_sizes[0]
    p = cfg.parameters[0] if args.param is None else args.param
    for path in bench.emit_matrix_market(cfg, n, p, cfg.output_dir):
        print(path)
    return 0


def cmd_solve_one(args) -> int:
    cfg = _apply_overrides(bench.load_config(args.config), args)
    n = args.n_side or cfg.mesh_sizes[0]
    p = cfg.parameters[0] if args.param is None else args.param
    row, rep, _ = bench.run_cell(cfg, n, p)
    stem = Path(cfg.output_dir) / f"history_{cfg.tag}_n{n}_{cfg.parameter_name}{p:g}"
    if rep is not None:
        bench.write_history(rep, stem)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["n_side", cfg.parameter_name, "iterations", "converged", "breakdown_reason",
                "err_ux", "err_uz", "err_p"])
    w.writerow([n, p, row.iterations, row.converged, row.breakdown_reason or "",
                row.err_ux, row.err_uz, row.err_p])
    if args.emit_mm:
        bench.emit_matrix_market(cfg, n, p, Path(cfg.output_dir) / "mm")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="magmapc", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, tol_multi=False):
        p.add_argument("--config", required=True, help="INI experiment description")
        p.add_argument("--out", help="output directory (overrides the config)")
        p.add_argument("--threads", type=int, default=None, help="parallel worker processes")
        if tol_multi:
            p.add_argument("--tol", type=float, action="append",
                           help="stopping tolerance; repeat for several")
        else:
            p.add_argument("--tol", type=float, help="relative stopping tolerance")
        p.add_argument("--residual", choices=("true", "preconditioned"))
        p.add_argument("--emit-mm", action="store_true", help="also write Matrix Market files")

    p = sub.add_parser("sweep", help="iteration-count table")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("converge", help="L2 errors and rates per stopping tolerance")
    common(p, tol_multi=True)
    p.set_defaults(func=cmd_converge)

    p = sub.add_parser("spectrum", help="dense spectral checks on a small mesh")
    p.add_argument("--n-side", type=int, default=4)
    p.add_argument("--sigma", type=float, default=0.5)
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--out")
    p.add_argument("--threads", type=int, default=None)
    p.set_defaults(func=cmd_spectrum)

    for name, func, helptext in (("export-mm", cmd_export, "write the system as Matrix Market"),
                                 ("solve-one", cmd_solve_one, "solve a single cell")):
        p = sub.add_parser(name, help=helptext)
        common(p)
        p.add_argument("--n-side", type=int)
        p.add_argument("--param", type=bench._parse_number)
        p.set_defaults(func=func)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    _set_threads(getattr(args, "threads", None))
    try:
        return args.func(args)
    except bench.ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
