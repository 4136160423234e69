import math

import numpy as np
import pytest
import scipy.io
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from pgmres.assembly import _row_counts, assemble_jacobian
from pgmres.mesh import build_mesh
from pgmres.sparse import CsrMatrix, axpy, dot, memory_footprint, norm2, spmv, write_matrix_market

finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False, allow_infinity=False)


def vectors(n):
    return arrays(np.float64, n, elements=finite)


def shell(n, nnz):
    """Index-only matrix for footprint arithmetic."""
    return CsrMatrix(n=n, row_ptr=np.linspace(0, nnz, n + 1).astype(np.int64), col_idx=np.empty(0), values=np.empty(0))


def test_identity_spmv():
    v = np.array([1.0, -2.0, 3.5])
    assert np.array_equal(spmv(CsrMatrix.identity(3), v), v)


def test_zero_vector():
    A = CsrMatrix.from_dense(np.arange(16.0).reshape(4, 4))
    assert np.array_equal(spmv(A, np.zeros(4)), np.zeros(4))


def test_random_fill_matches_dense():
    rng = np.random.default_rng(0)
    dense = rng.normal(size=(5, 5)) * (rng.random((5, 5)) < 0.4)
    A = CsrMatrix.from_dense(dense)
    A.validate()
    v = rng.normal(size=5)
    assert np.allclose(spmv(A, v), dense @ v, rtol=1e-14, atol=1e-14)


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        spmv(CsrMatrix.identity(3), np.ones(4))
    with pytest.raises(ValueError):
        dot(np.ones(3), np.ones(4))


def test_vector_kernel_examples():
    assert dot(np.array([1.0, 2, 3]), np.array([4.0, 5, 6])) == 32.0
    assert norm2(np.array([3.0, 4.0])) == 5.0
    assert np.array_equal(axpy(2.0, np.array([1.0, 1.0]), np.array([0.0, 1.0])), [2.0, 3.0])


def test_dot_against_fsum_oracle():
    rng = np.random.default_rng(7)
    a, b = rng.normal(size=100), rng.normal(size=100)
    assert dot(a, b) == pytest.approx(math.fsum(a * b), rel=1e-14)
    big_a, big_b = rng.normal(size=50_000), rng.normal(size=50_000)
    assert abs(dot(big_a, big_b) - math.fsum(big_a * big_b)) <= 1e-13 * np.abs(big_a * big_b).sum()


@given(st.integers(1, 200).flatmap(lambda n: st.tuples(vectors(n), vectors(n))))
def test_dot_close_to_exact_sum(pair):
    a, b = pair
    bound = 1e-13 * np.abs(a * b).sum() + 1e-300
    assert abs(dot(a, b) - math.fsum(a * b)) <= bound


@given(st.integers(0, 2**32 - 1), finite, finite)
def test_spmv_linear(seed, alpha, beta):
    rng = np.random.default_rng(seed)
    dense = rng.normal(size=(12, 12)) * (rng.random((12, 12)) < 0.3)
    A = CsrMatrix.from_dense(dense)
    u, v = rng.normal(size=12), rng.normal(size=12)
    lhs = spmv(A, alpha * u + beta * v)
    rhs = alpha * spmv(A, u) + beta * spmv(A, v)
    scale = np.abs(dense).sum(axis=1) * (abs(alpha) * np.abs(u).max() + abs(beta) * np.abs(v).max())
    assert np.all(np.abs(lhs - rhs) <= 1e-13 * scale + 1e-300)


def test_footprint_formula():
    assert memory_footprint(shell(29791, 1_600_000)) / 2**20 == pytest.approx(19, rel=0.05)
    assert memory_footprint(shell(132651, 7_720_000)) / 2**20 == pytest.approx(88, rel=0.05)


TABLE = {15: 19, 25: 88, 30: 153, 35: 245, 40: 380, 45: 524, 50: 720, 55: 961, 60: 1249}


@pytest.mark.parametrize("n_e", sorted(TABLE))
def test_footprint_matches_table(n_e):
    mesh = build_mesh(n_e)
    nnz = int(_row_counts(mesh).sum())
    mib = memory_footprint(shell(mesh.n_nodes, nnz)) / 2**20
    assert mib == pytest.approx(TABLE[n_e], rel=0.05)


def test_stiffness_negative_semidefinite_on_free_nodes():
    mesh = build_mesh(3)
    A = assemble_jacobian(mesh, np.zeros(mesh.n_nodes), 0.0)
    rng = np.random.default_rng(11)
    for _ in range(20):
        v = rng.normal(size=mesh.n_nodes)
        v[mesh.dirichlet] = 0.0
        assert dot(v, spmv(A, v)) <= 1e-12 * dot(v, v)


def test_validate_rejects_bad_structure():
    good = CsrMatrix.from_dense(np.eye(3))
    good.validate()
    bad_cols = CsrMatrix(3, good.row_ptr, np.array([0, 5, 2], dtype=np.int32), good.values)
    with pytest.raises(ValueError):
        bad_cols.validate()
    unsorted = CsrMatrix(2, np.array([0, 2, 2], dtype=np.int32), np.array([1, 0], dtype=np.int32), np.ones(2))
    with pytest.raises(ValueError):
        unsorted.validate()


def test_matrix_market_round_trip(tmp_path):
    mesh = build_mesh(1)
    u = np.random.default_rng(2).normal(size=mesh.n_nodes)
    A = assemble_jacobian(mesh, u, 6.8)
    path = tmp_path / "j.mtx"
    write_matrix_market(A, path)
    back = scipy.io.mmread(path).toarray()
    assert np.array_equal(back, A.toarray())
