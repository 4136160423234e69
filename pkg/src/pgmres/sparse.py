"""CSR storage and the vector kernels the Krylov solver is built from.

Kernels are compiled with numba (``nogil``) so the parallel layer can run the
same row-range code from worker threads. Sequential and parallel paths share
these kernels, which is what makes their results bit-identical.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
import scipy.sparse as sp

INDEX_DTYPE = np.int32
VALUE_DTYPE = np.float64

# elements per reduction chunk; fixed so the summation tree never depends on
# the worker count
CHUNK = 4096


@dataclass(eq=False)
class CsrMatrix:
    n: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    @property
    def nnz(self) -> int:
        return int(self.row_ptr[-1])

    @property
    def shape(self) -> tuple[int, int]:
        return (self.n, self.n)

    def validate(self) -> None:
        rp, ci = self.row_ptr, self.col_idx
        if rp.shape != (self.n + 1,) or rp[0] != 0:
            raise ValueError("row_ptr must have n+1 entries starting at 0")
        if np.any(np.diff(rp) < 0):
            raise ValueError("row_ptr must be nondecreasing")
        if ci.shape != (self.nnz,) or self.values.shape != (self.nnz,):
            raise ValueError("col_idx/values length must equal nnz")
        if self.nnz and (ci.min() < 0 or ci.max() >= self.n):
            raise ValueError("column index out of range")
        # strictly increasing within rows: a non-increase is allowed only at row starts
        steps = np.diff(ci.astype(np.int64))
        starts = np.zeros(max(self.nnz - 1, 0), dtype=bool)
        inner = rp[1:-1]
        inner = inner[(inner > 0) & (inner < self.nnz)]
        starts[inner - 1] = True
        if np.any((steps <= 0) & ~starts):
            raise ValueError("column indices must be strictly increasing within each row")

    def diagonal(self) -> np.ndarray:
        return _diagonal(self.row_ptr, self.col_idx, self.values, self.n)

    def to_scipy(self):
        return sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape)

    def toarray(self) -> np.ndarray:
        return self.to_scipy().toarray()

    @classmethod
    def from_dense(cls, dense) -> "CsrMatrix":
        dense = np.asarray(dense, dtype=VALUE_DTYPE)
        rows, cols = np.nonzero(dense)
        row_ptr = np.zeros(dense.shape[0] + 1, dtype=INDEX_DTYPE)
        np.add.at(row_ptr, rows + 1, 1)
        return cls(
            n=dense.shape[0],
            row_ptr=np.cumsum(row_ptr).astype(INDEX_DTYPE),
            col_idx=cols.astype(INDEX_DTYPE),
            values=dense[rows, cols].copy(),
        )

    @classmethod
    def identity(cls, n: int) -> "CsrMatrix":
        return cls(
            n=n,
            row_ptr=np.arange(n + 1, dtype=INDEX_DTYPE),
            col_idx=np.arange(n, dtype=INDEX_DTYPE),
            values=np.ones(n, dtype=VALUE_DTYPE),
        )


@numba.njit(nogil=True, cache=True)
def csr_rows(row_ptr, col_idx, values, x, out, begin, end, offset):
    """out[i - begin] = (A x)_i for rows begin..end; x[j - offset] holds entry j."""
    for i in range(begin, end):
        s = 0.0
        for p in range(row_ptr[i], row_ptr[i + 1]):
            s += values[p] * x[col_idx[p] - offset]
        out[i - begin] = s


@numba.njit(nogil=True, cache=True)
def chunk_partials(a, b, c_begin, c_end, chunk, out):
    n = a.shape[0]
    for c in range(c_begin, c_end):
        s = 0.0
        for i in range(c * chunk, min((c + 1) * chunk, n)):
            s += a[i] * b[i]
        out[c] = s


@numba.njit(nogil=True, cache=True)
def pairwise_sum(partials):
    buf = partials.copy()
    m = buf.shape[0]
    if m == 0:
        return 0.0
    while m > 1:
        half = m // 2
        for i in range(half):
            buf[i] = buf[2 * i] + buf[2 * i + 1]
        if m % 2:
            buf[half] = buf[m - 1]
            m = half + 1
        else:
            m = half
    return buf[0]


@numba.njit(cache=True)
def _diagonal(row_ptr, col_idx, values, n):
    d = np.zeros(n)
    for i in range(n):
        for p in range(row_ptr[i], row_ptr[i + 1]):
            if col_idx[p] == i:
                d[i] = values[p]
    return d


def n_chunks(n: int) -> int:
    return -(-n // CHUNK)


def spmv(A: CsrMatrix, v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=VALUE_DTYPE)
    if v.shape != (A.n,):
        raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector has shape {v.shape}")
    out = np.empty(A.n)
    csr_rows(A.row_ptr, A.col_idx, A.values, v, out, 0, A.n, 0)
    return out


def _check_pair(a, b):
    a = np.asarray(a, dtype=VALUE_DTYPE)
    b = np.asarray(b, dtype=VALUE_DTYPE)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def dot(a: np.ndarray, b: np.ndarray) -> float:
    """Inner product with fixed chunked pairwise summation."""
    a, b = _check_pair(a, b)
    partials = np.empty(n_chunks(a.shape[0]))
    chunk_partials(a, b, 0, partials.shape[0], CHUNK, partials)
    return float(pairwise_sum(partials))


def norm2(a: np.ndarray) -> float:
    return float(np.sqrt(dot(a, a)))


def axpy(alpha: float, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Return ``alpha * a + b``."""
    a, b = _check_pair(a, b)
    return alpha * a + b


def memory_footprint(A: CsrMatrix) -> int:
    """Bytes for 8-byte values, 4-byte column indices and 4-byte row offsets."""
    return 12 * A.nnz + 4 * (A.n + 1)


class SequentialKernels:
    """Kernel set used by the solver when no partition is given."""

    def __init__(self, A: CsrMatrix | None = None):
        self.A = A

    def spmv(self, v):
        return spmv(self.A, v)

    dot = staticmethod(dot)
    norm2 = staticmethod(norm2)

    @staticmethod
    def axpy_inplace(alpha, a, b):
        b += alpha * a


def write_matrix_market(A: CsrMatrix, path) -> None:
    rows = np.repeat(np.arange(A.n), np.diff(A.row_ptr))
    with Path(path).open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real general\n")
        fh.write(f"{A.n} {A.n} {A.nnz}\n")
        for i, j, v in zip(rows, A.col_idx, A.values):
            fh.write(f"{i + 1} {j + 1} {float(v)!r}\n")
