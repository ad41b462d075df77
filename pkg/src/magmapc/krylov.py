"""Preconditioned MINRES, restarted GMRES and Bi-CGSTAB.

All three start from a zero initial guess and, by default, declare
convergence on the true relative residual ``||b - A x|| / ||b||``, recomputed
explicitly at every check.  With ``residual_kind="preconditioned"`` they stop
on the residual norm native to the preconditioned iteration instead.

Iteration counting:

* MINRES: one Lanczos step.
* GMRES(k): one Arnoldi step, summed over restarts.
* Bi-CGSTAB: one full step (two operator and two preconditioner applies);
  convergence is also tested after the half step, which then counts as the
  iteration in progress.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

METHODS = ("minres", "gmres", "bicgstab")


@dataclass(frozen=True)
class KrylovConfig:
    method: str = "minres"
    restart: int = 100
    rel_tol: float = 1e-8
    max_iters: int = 1000
    residual_kind: str = "true"
    project_nullspace: bool = True
    # give up when the true residual has not improved by this factor over a window
    stagnation_window: int = 0
    stagnation_factor: float = 0.9

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown Krylov method {self.method!r}")
        if not self.rel_tol > 0:
            raise ValueError("rel_tol must be positive")
        if self.method == "gmres" and self.restart < 1:
            raise ValueError("GMRES restart must be >= 1")
        if self.residual_kind not in ("true", "preconditioned"):
            raise ValueError(f"unknown residual kind {self.residual_kind!r}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")


@dataclass
class SolveReport:
    iterations: int = 0
    converged: bool = False
    residual_history: list[float] = field(default_factory=list)
    precond_history: list[float] = field(default_factory=list)
    breakdown_reason: str | None = None
    wall_time: float = 0.0

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else math.nan

    def to_csv(self, path) -> None:
        """Columns: iteration, true relative residual, preconditioned relative residual."""
        with open(path, "w") as fh:
            fh.write("iteration,true_residual,preconditioned_residual\n")
            for i, r in enumerate(self.residual_history):
                pr = self.precond_history[i] if i < len(self.precond_history) else math.nan
                fh.write(f"{i},{r:.10e},{pr:.10e}\n")


@dataclass(frozen=True)
class ConstantPressure:
    """The constant fluid-pressure mode.

    ``weights`` is Q 1 (the mass-matrix row sums), so that primal vectors are
    projected to zero discrete mean while dual vectors (residuals) are made
    orthogonal to the constant.
    """

    block: slice
    weights: np.ndarray

    def project(self, x: np.ndarray) -> np.ndarray:
        return project_constant_pressure(x, self.block, self.weights)

    def project_dual(self, r: np.ndarray) -> np.ndarray:
        r = np.array(r, dtype=float)
        r[self.block] -= r[self.block].mean()
        return r


def project_constant_pressure(vec: np.ndarray, block: slice, weights: np.ndarray) -> np.ndarray:
    """Remove the Q-weighted mean from the fluid-pressure part of a block vector."""
    out = np.array(vec, dtype=float)
    p = out[block]
    p -= (weights @ p) / weights.sum()
    return out


class _Problem:
    """Operator, preconditioner and null-space bookkeeping shared by the solvers."""

    def __init__(self, A, M, b, cfg, nullspace):
        self.A = A
        self.M = M
        self.cfg = cfg
        self.ns = nullspace if cfg.project_nullspace else None
        b = np.asarray(b, dtype=float)
        self.b = self.ns.project_dual(b) if self.ns is not None else b
        self.bnorm = float(np.linalg.norm(self.b))

    def matvec(self, x):
        return self.A @ x

    def prec(self, r):
        z = self.M(r) if self.M is not None else np.array(r, dtype=float)
        return self.ns.project(z) if self.ns is not None else z

    def true_residual(self, x) -> float:
        return float(np.linalg.norm(self.b - self.A @ x)) / self.bnorm


def _finish(report, x, t0, prob):
    report.wall_time = time.perf_counter() - t0
    if prob.ns is not None:
        x = prob.ns.project(x)
    return x, report


def _stagnated(hist, cfg) -> bool:
    w = cfg.stagnation_window
    if w <= 0 or len(hist) <= w:
        return False
    return not min(hist[-w:]) < cfg.stagnation_factor * min(hist[:-w])


def _max_iters_or_stagnation(report, cfg):
    if report.iterations >= cfg.max_iters:
        report.breakdown_reason = "max-iters"
        return True
    if _stagnated(report.residual_history, cfg):
        report.breakdown_reason = "stagnation"
        return True
    return False


def minres(A, M: Callable | None, b, cfg: KrylovConfig = KrylovConfig(),
           nullspace: ConstantPressure | None = None):
    """Preconditioned MINRES (Paige and Saunders) with an SPD preconditioner ``M ~ A^-1``."""
    t0 = time.perf_counter()
    prob = _Problem(A, M, b, cfg, nullspace)
    n = prob.b.size
    x = np.zeros(n)
    report = SolveReport()
    if prob.bnorm == 0:
        report.converged = True
        report.residual_history.append(0.0)
        return _finish(report, x, t0, prob)

    r1 = prob.b.copy()
    y = prob.prec(r1)
    beta1 = float(r1 @ y)
    if beta1 <= 0:
        report.breakdown_reason = "indefinite-preconditioner"
        return _finish(report, x, t0, prob)
    beta1 = math.sqrt(beta1)
    report.residual_history.append(1.0)
    report.precond_history.append(1.0)

    oldb, beta, dbar, epsln = 0.0, beta1, 0.0, 0.0
    phibar, cs, sn = beta1, -1.0, 0.0
    w = np.zeros(n)
    w2 = np.zeros(n)
    r2 = r1.copy()
    eps = np.finfo(float).eps

    while True:
        report.iterations += 1
        v = y / beta
        y = prob.matvec(v)
        if report.iterations >= 2:
            y = y - (beta / oldb) * r1
        alfa = float(v @ y)
        y = y - (alfa / beta) * r2
        r1, r2 = r2, y
        y = prob.prec(r2)
        oldb = beta
        beta2 = float(r2 @ y)
        if beta2 < 0 or not np.isfinite(beta2):
            report.breakdown_reason = "indefinite-preconditioner" if beta2 < 0 else "non-finite"
            return _finish(report, x, t0, prob)
        beta = math.sqrt(beta2)

        oldeps = epsln
        delta = cs * dbar + sn * alfa
        gbar = sn * dbar - cs * alfa
        epsln = sn * beta
        dbar = -cs * beta
        gamma = max(math.hypot(gbar, beta), eps)
        cs, sn = gbar / gamma, beta / gamma
        phi = cs * phibar
        phibar = sn * phibar

        w1, w2 = w2, w
        w = (v - oldeps * w1 - delta * w2) / gamma
        x = x + phi * w

        rel_true = prob.true_residual(x)
        rel_prec = abs(phibar) / beta1
        report.residual_history.append(rel_true)
        report.precond_history.append(rel_prec)
        check = rel_true if cfg.residual_kind == "true" else rel_prec
        if not np.isfinite(check):
            report.breakdown_reason = "non-finite"
            return _finish(report, x, t0, prob)
        if check <= cfg.rel_tol:
            report.converged = True
            return _finish(report, x, t0, prob)
        if beta <= eps * beta1:
            # Lanczos exhausted the Krylov space without reaching the tolerance
            report.breakdown_reason = "stagnation"
            return _finish(report, x, t0, prob)
        if _max_iters_or_stagnation(report, cfg):
            return _finish(report, x, t0, prob)


def gmres(A, M: Callable | None, b, cfg: KrylovConfig = KrylovConfig(method="gmres"),
          nullspace: ConstantPressure | None = None):
    """Left-preconditioned restarted GMRES(k) with modified Gram-Schmidt."""
    t0 = time.perf_counter()
    prob = _Problem(A, M, b, cfg, nullspace)
    n = prob.b.size
    x = np.zeros(n)
    report = SolveReport()
    if prob.bnorm == 0:
        report.converged = True
        report.residual_history.append(0.0)
        return _finish(report, x, t0, prob)

    m = cfg.restart
    pb_norm = float(np.linalg.norm(prob.prec(prob.b)))
    report.residual_history.append(1.0)
    report.precond_history.append(1.0)

    while True:
        r = prob.b - prob.matvec(x)
        z = prob.prec(r)
        beta = float(np.linalg.norm(z))
        if beta == 0:
            report.converged = prob.true_residual(x) <= cfg.rel_tol
            report.breakdown_reason = None if report.converged else "stagnation"
            return _finish(report, x, t0, prob)
        V = np.zeros((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = z / beta
        x0 = x
        for j in range(m):
            report.iterations += 1
            w = prob.prec(prob.matvec(V[j]))
            for i in range(j + 1):
                H[i, j] = w @ V[i]
                w = w - H[i, j] * V[i]
            H[j + 1, j] = np.linalg.norm(w)
            happy = H[j + 1, j] <= 1e-14 * beta
            if not happy:
                V[j + 1] = w / H[j + 1, j]
            for i in range(j):
                H[i, j], H[i + 1, j] = (cs[i] * H[i, j] + sn[i] * H[i + 1, j],
                                        -sn[i] * H[i, j] + cs[i] * H[i + 1, j])
            denom = math.hypot(H[j, j], H[j + 1, j])
            cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
            H[j, j] = denom
            H[j + 1, j] = 0.0
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            yk = np.linalg.solve(np.triu(H[:j + 1, :j + 1]), g[:j + 1])
            x = x0 + V[:j + 1].T @ yk
            rel_true = prob.true_residual(x)
            rel_prec = abs(g[j + 1]) / pb_norm
            report.residual_history.append(rel_true)
            report.precond_history.append(rel_prec)
            check = rel_true if cfg.residual_kind == "true" else rel_prec
            if not np.isfinite(check):
                report.breakdown_reason = "non-finite"
                return _finish(report, x, t0, prob)
            if check <= cfg.rel_tol:
                report.converged = True
                return _finish(report, x, t0, prob)
            if happy:
                # invariant subspace found: restart from the current iterate
                break
            if _max_iters_or_stagnation(report, cfg):
                return _finish(report, x, t0, prob)


def bicgstab(A, M: Callable | None, b, cfg: KrylovConfig = KrylovConfig(method="bicgstab"),
             nullspace: ConstantPressure | None = None):
    """Left-preconditioned Bi-CGSTAB applied to M A x = M b."""
    t0 = time.perf_counter()
    prob = _Problem(A, M, b, cfg, nullspace)
    n = prob.b.size
    x = np.zeros(n)
    report = SolveReport()
    if prob.bnorm == 0:
        report.converged = True
        report.residual_history.append(0.0)
        return _finish(report, x, t0, prob)

    r = prob.prec(prob.b)
    r0 = r.copy()
    pb_norm = float(np.linalg.norm(r))
    rho = alpha = omega = 1.0
    v = np.zeros(n)
    p = np.zeros(n)
    report.residual_history.append(1.0)
    report.precond_history.append(1.0)

    def converged(xk, rk):
        rel_true = prob.true_residual(xk)
        rel_prec = float(np.linalg.norm(rk)) / pb_norm
        report.residual_history.append(rel_true)
        report.precond_history.append(rel_prec)
        check = rel_true if cfg.residual_kind == "true" else rel_prec
        if not np.isfinite(check):
            report.breakdown_reason = "non-finite"
            return True
        return check <= cfg.rel_tol

    while True:
        report.iterations += 1
        rho_new = float(r0 @ r)
        if rho_new == 0.0 or not np.isfinite(rho_new):
            report.breakdown_reason = "bicgstab-rho-zero"
            return _finish(report, x, t0, prob)
        beta = (rho_new / rho) * (alpha / omega)
        rho = rho_new
        p = r + beta * (p - omega * v)
        v = prob.prec(prob.matvec(p))
        denom = float(r0 @ v)
        if denom == 0.0:
            report.breakdown_reason = "bicgstab-rho-zero"
            return _finish(report, x, t0, prob)
        alpha = rho / denom
        s = r - alpha * v
        x_half = x + alpha * p
        # half-step check; the precond history keeps one entry per check
        if converged(x_half, s):
            report.converged = report.breakdown_reason is None
            return _finish(report, x_half, t0, prob)
        t = prob.prec(prob.matvec(s))
        tt = float(t @ t)
        if tt == 0.0:
            # s = 0 in exact arithmetic: x_half solves the preconditioned system
            x = x_half
            report.breakdown_reason = "bicgstab-omega-zero"
            return _finish(report, x, t0, prob)
        omega = float(t @ s) / tt
        x = x_half + omega * s
        r = s - omega * t
        if converged(x, r):
            report.converged = report.breakdown_reason is None
            return _finish(report, x, t0, prob)
        if omega == 0.0:
            report.breakdown_reason = "bicgstab-omega-zero"
            return _finish(report, x, t0, prob)
        if _max_iters_or_stagnation(report, cfg):
            return _finish(report, x, t0, prob)


SOLVERS = {"minres": minres, "gmres": gmres, "bicgstab": bicgstab}


def solve(A, M, b, cfg: KrylovConfig, nullspace: ConstantPressure | None = None):
    return SOLVERS[cfg.method](A, M, b, cfg, nullspace)
