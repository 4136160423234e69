"""Newton iteration for the discrete Bratu system with deflated GMRES(m)."""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np

from .assembly import assemble_jacobian, assemble_residual
from .deflation import Deflator
from .krylov import GmresConfig, GmresReport, gmres_restarted
from .mesh import StructuredMesh
from .parallel import ParallelKernels, partition_rows

log = logging.getLogger(__name__)


class NewtonError(RuntimeError):
    def __init__(self, msg, u=None, trace=None):
        super().__init__(msg)
        self.u = u
        self.trace = trace


@dataclass
class NewtonConfig:
    lam: float = 6.8
    update_norm_tol: float = 1e-8
    max_iterations: int = 30
    gmres: GmresConfig = field(default_factory=lambda: GmresConfig(m=50, max_restarts=100, tol=1e-10))
    deflation: bool = True
    r_max: int = 20
    continuation: bool = False
    continuation_steps: int = 4
    benchmark: bool = False
    threads: int = 1
    deterministic: bool = True

    def __post_init__(self):
        if not self.update_norm_tol > 0:
            raise ValueError("update_norm_tol must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not np.isfinite(self.lam):
            raise ValueError("lam must be finite")


@dataclass
class NewtonRecord:
    iteration: int
    update_inf_norm: float
    residual_2norm: float
    gmres_restarts: int


@dataclass
class NewtonTrace:
    records: list[NewtonRecord] = field(default_factory=list)
    gmres_reports: list[GmresReport] = field(default_factory=list, repr=False)
    deflators: list[Deflator] = field(default_factory=list, repr=False)

    @property
    def iterations(self) -> int:
        return len(self.records)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iter", "update_inf_norm", "residual_2norm", "gmres_restarts"])
            for r in self.records:
                w.writerow([r.iteration, repr(float(r.update_inf_norm)), repr(float(r.residual_2norm)), r.gmres_restarts])


def solve_linear(A, b, cfg: NewtonConfig, kernels: ParallelKernels, deflator: Deflator | None):
    """One deflated GMRES(m) solve of ``A x = b`` on the given kernels."""
    kernels.set_matrix(A)
    hook = deflator.hook(kernels.spmv) if deflator is not None else None
    return gmres_restarted(kernels.spmv, deflator, b, None, cfg.gmres, hook, kernels)


def _newton_at(mesh, u, lam, cfg, kernels, trace):
    n = mesh.n_nodes
    for it in range(cfg.max_iterations):
        R = assemble_residual(mesh, u, lam)
        J = assemble_jacobian(mesh, u, lam)
        # deflation space depends on J, so it restarts with every Newton step
        deflator = Deflator(n, r_max=cfg.r_max) if cfg.deflation else None
        du, rep = solve_linear(J, -R, cfg, kernels, deflator)
        trace.gmres_reports.append(rep)
        trace.deflators.append(deflator)
        step = float(np.max(np.abs(du))) if n else 0.0
        trace.records.append(NewtonRecord(len(trace.records), step, float(np.linalg.norm(R)), rep.restarts_used))
        log.info("newton %d: |du|_inf=%.3e |R|=%.3e restarts=%d", it, step, trace.records[-1].residual_2norm, rep.restarts_used)
        if not rep.converged and not cfg.benchmark:
            raise NewtonError(f"GMRES did not converge at Newton iteration {it} (eps={rep.final_relative_error:.3e})", u, trace)
        u = u + du
        if not np.all(np.isfinite(u)):
            raise NewtonError(f"non-finite iterate at Newton iteration {it}", u, trace)
        if cfg.benchmark or step < cfg.update_norm_tol:
            return u, True
    return u, False


def newton_solve(mesh: StructuredMesh, cfg: NewtonConfig | None = None, kernels: ParallelKernels | None = None):
    """Solve R(u) = 0 from u = 0; returns (u, trace).

    Raises :class:`NewtonError` (carrying ``u`` and ``trace``) when a linear
    solve fails or the iteration cap is hit.
    """
    cfg = cfg or NewtonConfig()
    own = kernels is None
    if own:
        kernels = ParallelKernels(None, partition_rows(mesh, cfg.threads), cfg.deterministic)
    trace = NewtonTrace()
    u = np.zeros(mesh.n_nodes)
    lams = np.linspace(1.0, cfg.lam, cfg.continuation_steps) if cfg.continuation else [cfg.lam]
    try:
        for lam in lams:
            u, ok = _newton_at(mesh, u, float(lam), cfg, kernels, trace)
            if not ok:
                raise NewtonError(f"Newton did not converge in {cfg.max_iterations} iterations at lambda={lam}", u, trace)
    finally:
        if own:
            kernels.close()
    return u, trace
