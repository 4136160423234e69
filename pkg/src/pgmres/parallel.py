"""Row-block partitioning and a shared-memory worker layer with phase timers.

Workers are threads running the ``nogil`` kernels of :mod:`pgmres.sparse` on
contiguous row blocks (z-slabs of the mesh). Each worker owns a private
buffer covering its rows plus the halo planes it reads; filling the halo part
of that buffer is the "local communication" phase. Reductions of per-worker
partial sums are the "global communication" phase.
"""

from __future__ import annotations

import csv
import os
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field

import numpy as np

from .mesh import StructuredMesh
from .sparse import CHUNK, CsrMatrix, chunk_partials, csr_rows, n_chunks, pairwise_sum


@dataclass(frozen=True)
class Partition:
    p: int
    row_ranges: list[tuple[int, int]]
    halo_map: list[np.ndarray] = field(repr=False)
    ext_ranges: list[tuple[int, int]] = field(repr=False)  # buffer window [lo, hi) per worker
    plane_size: int = 1

    @property
    def n(self) -> int:
        return self.row_ranges[-1][1]


def partition_rows(mesh: StructuredMesh, p: int) -> Partition:
    """Split the node planes z = 0..n_axis-1 into ``p`` contiguous slabs."""
    n = mesh.n_axis
    if not 1 <= p <= n:
        raise ValueError(f"worker count must be in [1, {n}], got {p}")
    plane = n * n
    base, extra = divmod(n, p)
    sizes = [base + (1 if w < extra else 0) for w in range(p)]
    bounds = np.concatenate([[0], np.cumsum(sizes)])
    ranges, halos, exts = [], [], []
    for w in range(p):
        z0, z1 = int(bounds[w]), int(bounds[w + 1])  # owned planes [z0, z1)
        reach = [(z - 2 if z % 2 == 0 else z - 1, z + 2 if z % 2 == 0 else z + 1) for z in range(z0, z1)]
        lo = max(0, min(r[0] for r in reach))
        hi = min(n - 1, max(r[1] for r in reach))
        ranges.append((z0 * plane, z1 * plane))
        exts.append((lo * plane, (hi + 1) * plane))
        halo = np.concatenate([np.arange(lo * plane, z0 * plane), np.arange(z1 * plane, (hi + 1) * plane)])
        halos.append(halo.astype(np.int64))
    return Partition(p=p, row_ranges=ranges, halo_map=halos, ext_ranges=exts, plane_size=plane)


def partition_uniform(n: int, p: int) -> Partition:
    """Row blocks for matrices without mesh structure; halo is every other row."""
    if not 1 <= p <= n:
        raise ValueError(f"worker count must be in [1, {n}], got {p}")
    bounds = np.linspace(0, n, p + 1).astype(int)
    ranges = [(int(bounds[w]), int(bounds[w + 1])) for w in range(p)]
    halos = [np.setdiff1d(np.arange(n), np.arange(b, e)) for b, e in ranges]
    return Partition(p=p, row_ranges=ranges, halo_map=halos, ext_ranges=[(0, n)] * p)


@dataclass
class TimingBreakdown:
    compute_s: float = 0.0
    local_comm_s: float = 0.0
    global_comm_s: float = 0.0

    @property
    def total_s(self) -> float:
        return self.compute_s + self.local_comm_s + self.global_comm_s

    def percentages(self) -> tuple[float, float, float]:
        t = self.total_s
        if t <= 0:
            return (100.0, 0.0, 0.0)
        return (100 * self.compute_s / t, 100 * self.local_comm_s / t, 100 * self.global_comm_s / t)


class ParallelKernels:
    """Fork-join kernels over a row partition.

    In deterministic mode inner products are reduced over fixed-size chunks in
    a fixed pairwise tree, so the result does not depend on ``p`` and matches
    :func:`pgmres.sparse.dot` bit for bit.
    """

    def __init__(self, A: CsrMatrix | None, partition: Partition, deterministic: bool = True):
        self.partition = partition
        self.deterministic = deterministic
        self.p = partition.p
        self._pool = ThreadPoolExecutor(max_workers=self.p) if self.p > 1 else None
        self._buffers = [np.empty(hi - lo) for lo, hi in partition.ext_ranges]
        self.local_comm_s = 0.0
        self.global_comm_s = 0.0
        self.A = None
        if A is not None:
            self.set_matrix(A)

    def set_matrix(self, A: CsrMatrix) -> None:
        if A.n != self.partition.n:
            raise ValueError(f"partition covers {self.partition.n} rows, matrix has {A.n}")
        for (b, e), (lo, hi) in zip(self.partition.row_ranges, self.partition.ext_ranges):
            if e > b:
                cols = A.col_idx[A.row_ptr[b] : A.row_ptr[e]]
                if cols.size and (cols.min() < lo or cols.max() >= hi):
                    raise ValueError("matrix references columns outside the partition halo")
        self.A = A

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def reset_timers(self) -> None:
        self.local_comm_s = 0.0
        self.global_comm_s = 0.0

    def _run(self, fn, items):
        if self._pool is None:
            return [fn(*it) for it in items]
        futures = [self._pool.submit(fn, *it) for it in items]
        return [f.result() for f in futures]

    # -- kernels ---------------------------------------------------------

    def spmv(self, v: np.ndarray) -> np.ndarray:
        A = self.A
        v = np.asarray(v, dtype=float)
        if v.shape != (A.n,):
            raise ValueError(f"dimension mismatch: matrix is {A.n}x{A.n}, vector has shape {v.shape}")
        out = np.empty(A.n)
        part = self.partition
        if self.p == 1:
            csr_rows(A.row_ptr, A.col_idx, A.values, v, out, 0, A.n, 0)
            return out

        def gather(w):
            lo, _ = part.ext_ranges[w]
            halo = part.halo_map[w]
            self._buffers[w][halo - lo] = v[halo]

        def compute(w):
            b, e = part.row_ranges[w]
            lo, _ = part.ext_ranges[w]
            buf = self._buffers[w]
            buf[b - lo : e - lo] = v[b:e]
            csr_rows(A.row_ptr, A.col_idx, A.values, buf, out[b:e], b, e, lo)

        t0 = time.perf_counter()
        self._run(gather, [(w,) for w in range(self.p)])
        self.local_comm_s += time.perf_counter() - t0
        self._run(compute, [(w,) for w in range(self.p)])
        return out

    def _chunk_split(self, n):
        nc = n_chunks(n)
        bounds = np.linspace(0, nc, self.p + 1).astype(int)
        return nc, [(int(bounds[w]), int(bounds[w + 1])) for w in range(self.p)]

    def dot(self, a: np.ndarray, b: np.ndarray) -> float:
        a = np.asarray(a, dtype=float)
        b = np.asarray(b, dtype=float)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
        if self.deterministic:
            nc, split = self._chunk_split(a.shape[0])
            partials = np.empty(nc)
            if self.p == 1:
                chunk_partials(a, b, 0, nc, CHUNK, partials)
                return float(pairwise_sum(partials))
            self._run(lambda c0, c1: chunk_partials(a, b, c0, c1, CHUNK, partials), split)
            t0 = time.perf_counter()
            s = float(pairwise_sum(partials))
            self.global_comm_s += time.perf_counter() - t0
            return s
        return self._dot_free(a, b)

    def _dot_free(self, a, b):
        n = a.shape[0]
        bounds = np.linspace(0, n, self.p + 1).astype(int)
        if self._pool is None:
            return float(np.dot(a, b))
        futures = [self._pool.submit(np.dot, a[bounds[w] : bounds[w + 1]], b[bounds[w] : bounds[w + 1]]) for w in range(self.p)]
        t0 = time.perf_counter()
        s = 0.0
        for f in as_completed(futures):
            s += float(f.result())
        self.global_comm_s += time.perf_counter() - t0
        return s

    def norm2(self, a: np.ndarray) -> float:
        return float(np.sqrt(self.dot(a, a)))

    def axpy_inplace(self, alpha: float, a: np.ndarray, b: np.ndarray) -> None:
        """b += alpha * a, split over row blocks."""
        if self.p == 1:
            b += alpha * a
            return

        def work(s, e):
            b[s:e] += alpha * a[s:e]

        self._run(work, self.partition.row_ranges)


def _pool_for(A, partition, deterministic):
    if A is not None and A.n != partition.n:
        raise ValueError(f"partition covers {partition.n} rows, matrix has {A.n}")
    return ParallelKernels(A, partition, deterministic)


def parallel_spmv(A: CsrMatrix, v: np.ndarray, partition: Partition) -> np.ndarray:
    with _pool_for(A, partition, True) as k:
        return k.spmv(v)


def parallel_dot(a: np.ndarray, b: np.ndarray, partition: Partition, deterministic: bool = True) -> float:
    if np.shape(a)[0] != partition.n:
        raise ValueError(f"partition covers {partition.n} rows, vector has {np.shape(a)[0]}")
    with _pool_for(None, partition, deterministic) as k:
        return k.dot(a, b)


def timed_run(fn, kernels: ParallelKernels):
    """Run ``fn()`` and split its wall time into compute / local / global."""
    kernels.reset_timers()
    t0 = time.perf_counter()
    result = fn()
    total = time.perf_counter() - t0
    local, glob = kernels.local_comm_s, kernels.global_comm_s
    return result, TimingBreakdown(compute_s=max(total - local - glob, 0.0), local_comm_s=local, global_comm_s=glob)


def available_cores() -> int:
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def write_breakdown_csv(rows, path) -> None:
    """rows: iterable of (dof, p, TimingBreakdown)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["dof", "p", "compute_pct", "local_comm_pct", "global_comm_pct"])
        for dof, p, tb in rows:
            w.writerow([dof, p, *(repr(x) for x in tb.percentages())])
