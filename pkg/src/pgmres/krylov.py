"""Right-preconditioned restarted GMRES(m).

Arnoldi uses modified Gram-Schmidt on the operator ``A M^-1``; the projected
least-squares problem is reduced with Givens rotations so the residual norm
of every inner iterate is available as ``|g[k+1]|`` without forming ``x``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .sparse import SequentialKernels

Operator = Callable[[np.ndarray], np.ndarray]


class GmresError(RuntimeError):
    pass


class SingularProjectionError(GmresError):
    pass


@dataclass
class GmresConfig:
    m: int = 50
    max_restarts: int = 100
    tol: float = 1e-8
    fixed_iterations: bool = False

    def __post_init__(self):
        if self.m < 1:
            raise ValueError("m must be >= 1")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")


@dataclass
class GmresWorkspace:
    """Krylov basis (rows of ``V``), Hessenberg matrices and rotation state.

    ``H`` keeps the raw Arnoldi coefficients (needed for Ritz values);
    ``R`` is the copy reduced to triangular form by the rotations.
    """

    m: int
    n: int
    V: np.ndarray = field(init=False, repr=False)
    H: np.ndarray = field(init=False, repr=False)
    R: np.ndarray = field(init=False, repr=False)
    cs: np.ndarray = field(init=False, repr=False)
    sn: np.ndarray = field(init=False, repr=False)
    g: np.ndarray = field(init=False, repr=False)
    beta: float = 0.0

    def __post_init__(self):
        self.V = np.zeros((self.m + 1, self.n))
        self.H = np.zeros((self.m + 1, self.m))
        self.R = np.zeros((self.m + 1, self.m))
        self.cs = np.zeros(self.m)
        self.sn = np.zeros(self.m)
        self.g = np.zeros(self.m + 1)

    def start(self, r: np.ndarray, beta: float) -> None:
        self.V[0] = r / beta
        self.H[:] = 0.0
        self.R[:] = 0.0
        self.g[:] = 0.0
        self.g[0] = beta
        self.beta = beta

    @property
    def breakdown_tol(self) -> float:
        return 1e-14 * self.beta


@dataclass
class ResidualRecord:
    restart: int
    inner_step: int
    monitored_residual: float
    explicit_residual: float = math.nan


@dataclass
class GmresReport:
    residual_history: list[ResidualRecord] = field(default_factory=list)
    restarts_used: int = 0
    converged: bool = False
    final_relative_error: float = math.nan
    initial_residual: float = math.nan

    def explicit_residuals(self) -> list[float]:
        """Explicit ``||b - A x||`` at the start of each cycle and after the last one."""
        return [r.explicit_residual for r in self.residual_history if r.inner_step == 0]

    def monitored(self, restart: int) -> list[float]:
        return [r.monitored_residual for r in self.residual_history if r.restart == restart and r.inner_step > 0]

    def to_csv(self, path) -> None:
        write_residual_csv(self, path)


def _check_finite(x, what: str) -> None:
    if not np.all(np.isfinite(x)):
        raise GmresError(f"non-finite value encountered in {what}")


def arnoldi_step(apply_A: Operator, apply_Minv: Operator, ws: GmresWorkspace, k: int, kernels=None) -> bool:
    """Extend the basis by one vector. Returns True on breakdown (h[k+1,k] ~ 0)."""
    kern = kernels or SequentialKernels
    w = apply_A(apply_Minv(ws.V[k]))
    _check_finite(w, "operator application")
    for i in range(k + 1):
        h = kern.dot(w, ws.V[i])
        ws.H[i, k] = h
        kern.axpy_inplace(-h, ws.V[i], w)
    h_next = kern.norm2(w)
    ws.H[k + 1, k] = h_next
    if not math.isfinite(h_next):
        raise GmresError("non-finite Arnoldi coefficient")
    if h_next < ws.breakdown_tol:
        ws.V[k + 1] = 0.0
        return True
    ws.V[k + 1] = w / h_next
    return False


def apply_rotations_and_update(ws: GmresWorkspace, k: int) -> float:
    """Rotate column k of the Hessenberg matrix and return ``|gamma_{k+1}|``."""
    col = ws.H[: k + 2, k].copy()
    for i in range(k):
        c, s = ws.cs[i], ws.sn[i]
        col[i], col[i + 1] = c * col[i] + s * col[i + 1], -s * col[i] + c * col[i + 1]
    a, b = col[k], col[k + 1]
    rho = math.hypot(a, b)
    if rho == 0.0:
        c, s = 1.0, 0.0
    else:
        c, s = a / rho, b / rho
    ws.cs[k], ws.sn[k] = c, s
    col[k], col[k + 1] = rho, 0.0
    ws.R[: k + 2, k] = col
    ws.g[k + 1] = -s * ws.g[k]
    ws.g[k] = c * ws.g[k]
    if not math.isfinite(ws.g[k + 1]):
        raise GmresError("non-finite residual estimate")
    return float(abs(ws.g[k + 1]))


def solve_least_squares(ws: GmresWorkspace, k: int) -> np.ndarray:
    """Back-substitution on the leading k x k triangular factor."""
    y = np.zeros(k)
    for i in range(k - 1, -1, -1):
        d = ws.R[i, i]
        if d == 0.0:
            raise SingularProjectionError(f"zero pivot at position {i} of the projected system")
        y[i] = (ws.g[i] - ws.R[i, i + 1 : k] @ y[i + 1 : k]) / d
    return y


RestartHook = Callable[[np.ndarray, np.ndarray], None]


def gmres_restarted(
    apply_A: Operator,
    apply_Minv: Optional[Operator],
    b: np.ndarray,
    x0: Optional[np.ndarray] = None,
    cfg: Optional[GmresConfig] = None,
    deflator_hook: Optional[RestartHook] = None,
    kernels=None,
) -> tuple[np.ndarray, GmresReport]:
    """Solve ``A x = b`` with right-preconditioned GMRES(m).

    ``apply_Minv`` may change between restarts (the deflation hook updates it)
    but stays fixed within a cycle. The hook receives the square Hessenberg
    ``H_k`` and the basis rows ``V_k`` after ``x`` has been updated.
    """
    cfg = cfg or GmresConfig()
    kern = kernels or SequentialKernels
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    minv = apply_Minv or (lambda v: v)
    m = min(cfg.m, n)
    ws = GmresWorkspace(m=m, n=n)
    report = GmresReport()

    r = b - apply_A(x)
    _check_finite(r, "initial residual")
    beta = kern.norm2(r)
    r0 = beta
    report.initial_residual = r0
    if r0 == 0.0:
        report.converged = True
        report.final_relative_error = 0.0
        report.residual_history.append(ResidualRecord(0, 0, 0.0, 0.0))
        return x, report

    for restart in range(cfg.max_restarts):
        report.residual_history.append(ResidualRecord(restart, 0, beta, beta))
        if beta == 0.0 or (not cfg.fixed_iterations and beta <= cfg.tol * r0):
            report.converged = True
            break
        ws.start(r, beta)
        k_used = 0
        stop = False
        for k in range(m):
            breakdown = arnoldi_step(apply_A, minv, ws, k, kernels)
            res = apply_rotations_and_update(ws, k)
            k_used = k + 1
            report.residual_history.append(ResidualRecord(restart, k_used, res))
            if breakdown:
                stop = True
                break
            if not cfg.fixed_iterations and res <= cfg.tol * r0:
                break
        y = solve_least_squares(ws, k_used)
        x += minv(y @ ws.V[:k_used])
        _check_finite(x, "solution update")
        report.restarts_used = restart + 1
        if deflator_hook is not None and k_used > 0:
            deflator_hook(ws.H[:k_used, :k_used], ws.V[:k_used])
        r = b - apply_A(x)
        beta = kern.norm2(r)
        if stop:
            # lucky breakdown: the Krylov space is invariant, nothing left to gain
            report.converged = True
            break
    else:
        report.converged = beta <= cfg.tol * r0

    last = report.residual_history[-1]
    if not (last.inner_step == 0 and last.restart == report.restarts_used):
        report.residual_history.append(ResidualRecord(report.restarts_used, 0, beta, beta))
    report.final_relative_error = beta / r0
    if beta <= cfg.tol * r0:
        report.converged = True
    return x, report


def write_residual_csv(report: GmresReport, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["restart", "inner_step", "monitored_residual", "explicit_residual"])
        for rec in report.residual_history:
            w.writerow([rec.restart, rec.inner_step, repr(rec.monitored_residual), repr(rec.explicit_residual)])
