"""Deflation preconditioner built from restart-time Ritz information.

The preconditioner is

    M^-1 = I + U (|mu| T^-1 - I) U^T,   T = U^T A U,

with ``U`` an orthonormal basis of approximate eigenvectors for the
smallest-magnitude eigenvalues and ``mu`` an estimate of the largest one.
Directions in span(U) are scaled so ``A M^-1`` maps them to ``|mu|``;
everything orthogonal to ``U`` passes through unchanged.
"""

from __future__ import annotations

import csv
import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

log = logging.getLogger(__name__)

INVERSE_POWER_TOL = 1e-10
INVERSE_POWER_MAXIT = 500
POWER_MAXIT = 200


class EigenSolveError(RuntimeError):
    pass


@dataclass
class RestartRecord:
    restart: int
    r: int
    mu: float
    smallest_ritz: float


@dataclass(eq=False)
class Deflator:
    n: int
    r_max: int = 20
    l: int = 1
    accept_tol: float = 1e-8
    mu: float = 0.0
    U: np.ndarray = field(init=False, repr=False)  # rows are basis vectors
    AU: np.ndarray = field(init=False, repr=False)
    T: np.ndarray = field(init=False, repr=False)
    history: list[RestartRecord] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.l != 1:
            # only single-vector growth is exercised; batching needs block inverse iteration
            raise NotImplementedError("only l=1 is supported")
        self.U = np.zeros((0, self.n))
        self.AU = np.zeros((0, self.n))
        self.T = np.zeros((0, 0))
        self._lu = None
        self._bypass = False

    @property
    def r(self) -> int:
        return self.U.shape[0]

    def reset(self) -> None:
        self.__post_init__()
        self.mu = 0.0
        self.history.clear()

    def _refactor(self) -> None:
        self._bypass = False
        self._lu = None
        if self.r == 0:
            return
        with warnings.catch_warnings():
            warnings.simplefilter("error", sla.LinAlgWarning)
            try:
                lu = sla.lu_factor(self.T, check_finite=True)
            except (sla.LinAlgWarning, ValueError, np.linalg.LinAlgError):
                lu = None
        if lu is None or np.any(np.diag(lu[0]) == 0.0):
            warnings.warn("deflation matrix T is singular; preconditioner bypassed", RuntimeWarning)
            self._bypass = True
            return
        self._lu = lu

    def __call__(self, v: np.ndarray) -> np.ndarray:
        return apply(self, v)

    def hook(self, apply_A):
        """Restart callback for :func:`gmres_restarted`."""

        def _hook(H, V):
            update_from_restart(self, H, V, apply_A)

        return _hook


def apply(d: Deflator, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if d.r == 0 or d._bypass:
        return v.copy()
    c = d.U @ v
    corr = abs(d.mu) * sla.lu_solve(d._lu, c) - c
    return v + corr @ d.U


def inverse_power(H: np.ndarray, tol: float = INVERSE_POWER_TOL, maxit: int = INVERSE_POWER_MAXIT):
    """Eigenpair of H for its smallest-magnitude eigenvalue (shift 0)."""
    k = H.shape[0]
    scale = max(np.abs(H).max(), np.finfo(float).tiny)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu = sla.lu_factor(H)
    piv = np.abs(np.diag(lu[0]))
    if piv.min() <= 1e-14 * scale:
        # exactly singular projection: null vector is the answer
        _, _, vt = np.linalg.svd(H)
        z = vt[-1]
        return float(z @ H @ z), z
    z = np.ones(k) / math.sqrt(k)
    for _ in range(maxit):
        z = sla.lu_solve(lu, z)
        z /= np.linalg.norm(z)
        theta = float(z @ H @ z)
        if np.linalg.norm(H @ z - theta * z) <= tol * scale:
            return theta, z
    raise EigenSolveError("inverse power iteration did not converge")


def power_estimate(H: np.ndarray, maxit: int = POWER_MAXIT) -> float:
    """Largest eigenvalue magnitude of H by power iteration (norm-ratio estimate)."""
    k = H.shape[0]
    z = np.ones(k) / math.sqrt(k)
    est = 0.0
    for _ in range(maxit):
        w = H @ z
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0
        if abs(nw - est) <= 1e-12 * nw:
            return float(nw)
        est = nw
        z = w / nw
    return float(est)


def update_from_restart(d: Deflator, H: np.ndarray, V: np.ndarray, apply_A) -> Deflator:
    """Grow U by the Ritz vector of the smallest Ritz value of H.

    ``H`` is the square Hessenberg matrix of the finished cycle and ``V`` the
    matching basis, one vector per row.
    """
    H = np.asarray(H, dtype=float)
    restart = len(d.history)
    try:
        theta, z = inverse_power(H)
    except EigenSolveError:
        log.info("restart %d: inverse power iteration failed, preconditioner unchanged", restart)
        d.history.append(RestartRecord(restart, d.r, d.mu, math.nan))
        return d
    d.mu = max(abs(d.mu), power_estimate(H))

    u = z @ V
    for _ in range(2):  # MGS plus one re-orthogonalisation pass
        for j in range(d.r):
            u -= (d.U[j] @ u) * d.U[j]
    nu = np.linalg.norm(u)
    if nu >= d.accept_tol:
        u /= nu
        au = apply_A(u)
        r = d.r
        T = np.empty((r + 1, r + 1))
        T[:r, :r] = d.T
        T[r, :r] = d.AU @ u
        T[:r, r] = d.U @ au
        T[r, r] = u @ au
        d.U = np.vstack([d.U, u])
        d.AU = np.vstack([d.AU, au])
        d.T = T
        if d.r > d.r_max:
            truncate(d)
        else:
            d._refactor()
    d.history.append(RestartRecord(restart, d.r, d.mu, theta))
    return d


def truncate(d: Deflator) -> Deflator:
    """Drop the ``l`` directions of U tied to the largest eigenvalues of T."""
    if d.r <= d.r_max:
        return d
    try:
        lam = sla.eigvals(d.T)
        cut = np.sort(np.abs(lam))[d.r - d.l]
        # real Schur form with the retained eigenvalues ordered first
        _, Z, sdim = sla.schur(d.T, output="real", sort=lambda re, im: math.hypot(re, im) < cut)
    except (np.linalg.LinAlgError, ValueError) as exc:
        warnings.warn(f"truncation skipped: {exc}", RuntimeWarning)
        return d
    if sdim == 0:
        warnings.warn("truncation skipped: no eigenvalues below the cut", RuntimeWarning)
        return d
    Q = Z[:, :sdim]
    d.U = Q.T @ d.U
    d.AU = Q.T @ d.AU
    d.T = d.U @ d.AU.T
    d._refactor()
    return d


def write_restart_csv(d: Deflator, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["restart", "r", "mu", "smallest_ritz"])
        for rec in d.history:
            w.writerow([rec.restart, rec.r, repr(float(rec.mu)), repr(float(rec.smallest_ritz))])
