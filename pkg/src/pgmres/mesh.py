"""Structured 27-node hexahedral mesh of the unit cube."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import IntEnum

import numpy as np


class NodeClass(IntEnum):
    INTERIOR = 0
    DIRICHLET_XY = 1


@dataclass(frozen=True, eq=False)
class StructuredMesh:
    """Uniform mesh of [0,1]^3 with ``n_e`` tri-quadratic elements per axis.

    Nodes are numbered lexicographically, x fastest, then y, then z.
    """

    n_e: int
    node_class: np.ndarray = field(repr=False)

    @property
    def n_axis(self) -> int:
        return 2 * self.n_e + 1

    @property
    def n_nodes(self) -> int:
        return self.n_axis**3

    @property
    def n_elements(self) -> int:
        return self.n_e**3

    @property
    def h(self) -> float:
        return 1.0 / (2 * self.n_e)

    @property
    def element_size(self) -> float:
        return 1.0 / self.n_e

    def node_index(self, i, j, k):
        n = self.n_axis
        return i + n * (j + n * k)

    def node_ijk(self, node):
        n = self.n_axis
        node = np.asarray(node)
        return node % n, (node // n) % n, node // (n * n)

    def coordinates(self) -> np.ndarray:
        """(N, 3) array of node coordinates."""
        i, j, k = self.node_ijk(np.arange(self.n_nodes))
        return np.column_stack([i, j, k]) * self.h

    @property
    def dirichlet(self) -> np.ndarray:
        return self.node_class == NodeClass.DIRICHLET_XY

    def connectivity(self) -> np.ndarray:
        """(n_e^3, 27) global node ids of every element."""
        ne, n = self.n_e, self.n_axis
        e = np.arange(self.n_elements)
        ex, ey, ez = e % ne, (e // ne) % ne, e // (ne * ne)
        base = 2 * ex + n * (2 * ey + n * 2 * ez)
        return base[:, None] + _local_offsets(n)[None, :]


def _local_offsets(n_axis: int) -> np.ndarray:
    a = np.arange(27)
    return a % 3 + n_axis * ((a // 3) % 3 + n_axis * (a // 9))


def build_mesh(n_e: int) -> StructuredMesh:
    if isinstance(n_e, bool) or int(n_e) != n_e or n_e < 1:
        raise ValueError(f"n_e must be a positive integer, got {n_e!r}")
    n_e = int(n_e)
    n = 2 * n_e + 1
    idx = np.arange(n)
    face = (idx == 0) | (idx == n - 1)
    on_xy = face[None, :] | face[:, None]  # indexed [j, i]
    cls = np.broadcast_to(on_xy, (n, n, n)).reshape(-1).astype(np.int8)
    cls.setflags(write=False)
    return StructuredMesh(n_e=n_e, node_class=cls)


def element_nodes(mesh: StructuredMesh, e: int) -> list[int]:
    ne = mesh.n_e
    if not 0 <= e < mesh.n_elements:
        raise IndexError(f"element {e} out of range [0, {mesh.n_elements})")
    ex, ey, ez = e % ne, (e // ne) % ne, e // (ne * ne)
    base = mesh.node_index(2 * ex, 2 * ey, 2 * ez)
    return [int(base + o) for o in _local_offsets(mesh.n_axis)]


def classify_node(mesh: StructuredMesh, node: int) -> NodeClass:
    if not 0 <= node < mesh.n_nodes:
        raise IndexError(f"node {node} out of range [0, {mesh.n_nodes})")
    return NodeClass(int(mesh.node_class[node]))
