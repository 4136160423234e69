"""Galerkin assembly of the Bratu residual and Jacobian on 27-node bricks.

Residual rows for free nodes are

    R_i = -sum_j u_j (grad phi_j, grad phi_i) + lam * (exp(u_h), phi_i)

and rows of nodes on the x/y faces are replaced by ``R_i = u_i``. The
Jacobian keeps the Dirichlet-column entries of free rows (no symmetrisation)
and stores a single unit diagonal in each Dirichlet row.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .mesh import StructuredMesh, build_mesh
from .sparse import INDEX_DTYPE, CsrMatrix

_NODES_1D = np.array([-1.0, 0.0, 1.0])


def _lagrange_1d(s):
    s = np.asarray(s, dtype=float)
    vals = np.stack([0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)], axis=-1)
    ders = np.stack([s - 0.5, -2.0 * s, s + 0.5], axis=-1)
    return vals, ders


@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # (27, 3) in [-1, 1]^3
    weights: np.ndarray  # (27,)


@dataclass(frozen=True)
class BasisEval:
    values: np.ndarray  # (27,)
    gradients: np.ndarray  # (27, 3), reference coordinates


def gauss_legendre_3x3x3() -> QuadratureRule:
    x, w = np.polynomial.legendre.leggauss(3)
    a = np.arange(27)
    ix, iy, iz = a % 3, (a // 3) % 3, a // 9
    pts = np.column_stack([x[ix], x[iy], x[iz]])
    return QuadratureRule(points=pts, weights=w[ix] * w[iy] * w[iz])


def _tabulate(points):
    """Basis values (P, 27) and reference gradients (P, 27, 3) at points (P, 3)."""
    points = np.atleast_2d(points)
    vx, dx = _lagrange_1d(points[:, 0])
    vy, dy = _lagrange_1d(points[:, 1])
    vz, dz = _lagrange_1d(points[:, 2])
    a = np.arange(27)
    ix, iy, iz = a % 3, (a // 3) % 3, a // 9
    values = vx[:, ix] * vy[:, iy] * vz[:, iz]
    grads = np.stack(
        [dx[:, ix] * vy[:, iy] * vz[:, iz], vx[:, ix] * dy[:, iy] * vz[:, iz], vx[:, ix] * vy[:, iy] * dz[:, iz]],
        axis=-1,
    )
    return values, grads


def shape_eval(xi: float, eta: float, zeta: float) -> BasisEval:
    values, grads = _tabulate(np.array([[xi, eta, zeta]], dtype=float))
    return BasisEval(values=values[0], gradients=grads[0])


_QUAD = gauss_legendre_3x3x3()
_PHI, _DPHI = _tabulate(_QUAD.points)  # (q, a), (q, a, d)
# reference stiffness sum_q w_q grad phi_a . grad phi_b
_K_REF = np.einsum("q,qad,qbd->ab", _QUAD.weights, _DPHI, _DPHI)


@dataclass(frozen=True)
class SparsityPattern:
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])


def _axis_reach(n_axis: int):
    """Per-index coupling window [lo, hi] along one axis.

    Even indices sit on element faces and see two elements, odd ones one.
    """
    i = np.arange(n_axis)
    even = i % 2 == 0
    lo = np.where(even, np.maximum(i - 2, 0), i - 1)
    hi = np.where(even, np.minimum(i + 2, n_axis - 1), i + 1)
    return lo, hi, hi - lo + 1


def _row_counts(mesh: StructuredMesh) -> np.ndarray:
    n = mesh.n_axis
    _, _, w = _axis_reach(n)
    counts = (w[None, None, :] * w[None, :, None] * w[:, None, None]).reshape(-1)
    return np.where(mesh.dirichlet, 1, counts)


def symbolic_pattern(mesh: StructuredMesh) -> SparsityPattern:
    n = mesh.n_axis
    counts = _row_counts(mesh)
    row_ptr = np.zeros(mesh.n_nodes + 1, dtype=np.int64)
    np.cumsum(counts, out=row_ptr[1:])
    if row_ptr[-1] > np.iinfo(INDEX_DTYPE).max:
        raise MemoryError("pattern too large for 4-byte indices")
    col_idx = np.empty(int(row_ptr[-1]), dtype=INDEX_DTYPE)

    lo, hi, _ = _axis_reach(n)
    d = np.arange(-2, 3)
    # offsets ordered dz, dy, dx (outer to inner) -> ascending global column
    dz, dy, dx = (g.reshape(-1) for g in np.meshgrid(d, d, d, indexing="ij"))
    jj, ii = np.divmod(np.arange(n * n), n)
    ok_x = (ii[:, None] + dx >= lo[ii][:, None]) & (ii[:, None] + dx <= hi[ii][:, None])
    ok_y = (jj[:, None] + dy >= lo[jj][:, None]) & (jj[:, None] + dy <= hi[jj][:, None])
    dirichlet_plane = mesh.dirichlet[: n * n]
    diag_only = (dx == 0) & (dy == 0) & (dz == 0)
    offset = dx + n * dy + n * n * dz
    for k in range(n):
        ok_z = (k + dz >= lo[k]) & (k + dz <= hi[k])
        mask = ok_x & ok_y & ok_z[None, :]
        mask[dirichlet_plane] = diag_only
        rows = k * n * n + np.arange(n * n)
        cols = rows[:, None] + offset[None, :]
        col_idx[row_ptr[k * n * n] : row_ptr[(k + 1) * n * n]] = cols[mask]
    return SparsityPattern(n=mesh.n_nodes, row_ptr=row_ptr.astype(INDEX_DTYPE), col_idx=col_idx)


@dataclass(frozen=True)
class _Structure:
    pattern: SparsityPattern
    conn: np.ndarray  # (E, 27)
    free_entries: np.ndarray  # flat (E*27*27) mask of element entries in free rows
    positions: np.ndarray  # CSR slot of each kept element entry
    dirichlet_diag: np.ndarray  # CSR slots of Dirichlet diagonals


@lru_cache(maxsize=4)
def _structure(n_e: int) -> _Structure:
    mesh = build_mesh(n_e)
    pattern = symbolic_pattern(mesh)
    conn = mesh.connectivity()
    n = mesh.n_axis
    lo, _, w = _axis_reach(n)

    rows = np.repeat(conn, 27, axis=1).reshape(-1)
    cols = np.tile(conn, (1, 27)).reshape(-1)
    free = ~mesh.dirichlet[rows]
    rows, cols = rows[free].astype(np.int64), cols[free].astype(np.int64)
    ri, rj, rk = rows % n, (rows // n) % n, rows // (n * n)
    ci, cj, ck = cols % n, (cols // n) % n, cols // (n * n)
    local = ((ck - lo[rk]) * w[rj] + (cj - lo[rj])) * w[ri] + (ci - lo[ri])
    positions = pattern.row_ptr[rows].astype(np.int64) + local

    dnodes = np.flatnonzero(mesh.dirichlet)
    return _Structure(
        pattern=pattern,
        conn=conn,
        free_entries=free,
        positions=positions,
        dirichlet_diag=pattern.row_ptr[dnodes].astype(np.int64),
    )


def _check_u(mesh, u):
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_nodes,):
        raise ValueError(f"u must have length {mesh.n_nodes}, got shape {u.shape}")
    return u


def _element_factors(mesh):
    he = mesh.element_size
    return 0.5 * he * _K_REF, (0.5 * he) ** 3 * _QUAD.weights


def assemble_residual(mesh: StructuredMesh, u, lam: float) -> np.ndarray:
    u = _check_u(mesh, u)
    st = _structure(mesh.n_e)
    k_elem, wdet = _element_factors(mesh)
    ue = u[st.conn]
    source = np.exp(ue @ _PHI.T) * wdet
    elem = lam * (source @ _PHI) - ue @ k_elem
    R = np.bincount(st.conn.reshape(-1), weights=elem.reshape(-1), minlength=mesh.n_nodes)
    d = mesh.dirichlet
    R[d] = u[d]
    return R


def assemble_jacobian(mesh: StructuredMesh, u, lam: float) -> CsrMatrix:
    u = _check_u(mesh, u)
    st = _structure(mesh.n_e)
    k_elem, wdet = _element_factors(mesh)
    source = np.exp(u[st.conn] @ _PHI.T) * wdet
    elem = np.matmul(_PHI.T[None], lam * source[:, :, None] * _PHI[None]) - k_elem[None]
    nnz = st.pattern.nnz
    values = np.bincount(st.positions, weights=elem.reshape(-1)[st.free_entries], minlength=nnz)
    values[st.dirichlet_diag] = 1.0
    return CsrMatrix(n=mesh.n_nodes, row_ptr=st.pattern.row_ptr, col_idx=st.pattern.col_idx, values=values)
