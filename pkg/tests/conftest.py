import itertools

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from pgmres.assembly import assemble_jacobian, assemble_residual
from pgmres.mesh import build_mesh

settings.register_profile("default", deadline=None, max_examples=40, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def brute_force_elements(n_e):
    """Element -> 27 global node ids, by plain loops."""
    n = 2 * n_e + 1
    out = []
    for ez, ey, ex in itertools.product(range(n_e), repeat=3):
        ids = []
        for iz, iy, ix in itertools.product(range(3), repeat=3):
            ids.append((2 * ex + ix) + n * ((2 * ey + iy) + n * (2 * ez + iz)))
        out.append(ids)
    return out


def brute_force_pattern(n_e):
    """Set of (row, col) pairs implied by element coupling, Dirichlet rows reduced to the diagonal."""
    mesh = build_mesh(n_e)
    pairs = set()
    for ids in brute_force_elements(n_e):
        for a in ids:
            if mesh.dirichlet[a]:
                continue
            for b in ids:
                pairs.add((a, b))
    for a in np.flatnonzero(mesh.dirichlet):
        pairs.add((int(a), int(a)))
    return pairs


def quadratic_1d(n_e):
    """Global 1-D stiffness and mass of quadratic elements on [0, 1]."""
    h = 1.0 / n_e
    k = np.array([[7, -8, 1], [-8, 16, -8], [1, -8, 7]]) / (3 * h)
    m = np.array([[4, 2, -1], [2, 16, 2], [-1, 2, 4]]) * h / 30
    n = 2 * n_e + 1
    K, M = np.zeros((n, n)), np.zeros((n, n))
    for e in range(n_e):
        s = slice(2 * e, 2 * e + 3)
        K[s, s] += k
        M[s, s] += m
    return K, M


def kron_operators(n_e):
    """3-D stiffness and mass as Kronecker sums (z slowest, x fastest)."""
    K1, M1 = quadratic_1d(n_e)
    kron3 = lambda a, b, c: np.kron(a, np.kron(b, c))
    K = kron3(M1, M1, K1) + kron3(M1, K1, M1) + kron3(K1, M1, M1)
    return K, kron3(M1, M1, M1)


def simpson_weights(n_e):
    """Integral of each 1-D quadratic nodal basis function."""
    h = 1.0 / (2 * n_e)
    w = np.full(2 * n_e + 1, 2.0)
    w[1::2] = 4.0
    w[0] = w[-1] = 1.0
    return w * h / 3


def first_system(n_e, lam=6.8):
    mesh = build_mesh(n_e)
    u = np.zeros(mesh.n_nodes)
    return mesh, assemble_jacobian(mesh, u, lam), -assemble_residual(mesh, u, lam)


@pytest.fixture(scope="session")
def system_ne2():
    return first_system(2)


@pytest.fixture(scope="session")
def system_ne8():
    return first_system(8)
