"""Two-level vertex reordering: partitions contiguous, VIP-descending inside each."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ShapeError
from .graph import Graph, VertexRoles, _frozen
from .partition import PartitionMap


@dataclass(frozen=True, eq=False)
class ReorderMap:
    new_of_old: np.ndarray
    old_of_new: np.ndarray
    ranges: np.ndarray  # (K, 2) half-open [start, end) per partition in new ids

    @property
    def num_vertices(self) -> int:
        return self.new_of_old.size

    def local_order(self, k: int) -> np.ndarray:
        """Old ids of partition ``k`` in their new (storage) order."""
        s, e = self.ranges[k]
        return self.old_of_new[s:e]

    def write(self, path) -> None:
        with open(path, "w") as fh:
            for old, new in enumerate(self.new_of_old.tolist()):
                fh.write(f"{old} {new}\n")

    @classmethod
    def from_permutation(cls, new_of_old, part: PartitionMap) -> "ReorderMap":
        new_of_old = np.asarray(new_of_old, dtype=np.int64)
        n = new_of_old.size
        if n != part.part_of.size or np.any((new_of_old < 0) | (new_of_old >= n)):
            raise FormatError("reorder map is not a permutation of the vertex ids")
        old_of_new = np.full(n, -1, dtype=np.int64)
        old_of_new[new_of_old] = np.arange(n)
        if np.any(old_of_new < 0):
            raise FormatError("reorder map is not a permutation")
        if np.any(np.diff(part.part_of[old_of_new]) < 0):
            raise FormatError("reorder map must keep partitions contiguous and in order")
        sizes = part.sizes
        ends = np.cumsum(sizes)
        ranges = np.column_stack([ends - sizes, ends])
        return cls(_frozen(new_of_old), _frozen(old_of_new), _frozen(ranges))


def read_reorder_map(path, part: PartitionMap) -> ReorderMap:
    pairs = np.loadtxt(path, dtype=np.int64, ndmin=2, comments="#")
    new_of_old = np.empty(pairs.shape[0], dtype=np.int64)
    new_of_old[pairs[:, 0]] = pairs[:, 1]
    return ReorderMap.from_permutation(new_of_old, part)


def build_reorder(part: PartitionMap, vip) -> ReorderMap:
    """Concatenate partitions in order; sort each by its own VIP, descending, ties by id.

    ``vip[k]`` is partition ``k``'s score vector (length n) or a ``VipScores``.
    """
    n = part.part_of.size
    if len(vip) != part.K:
        raise ShapeError(f"need {part.K} score vectors, got {len(vip)}")
    chunks = []
    for k in range(part.K):
        s = np.asarray(getattr(vip[k], "total", vip[k]), dtype=np.float64)
        if s.shape != (n,):
            raise ShapeError(f"score vector {k} must have length {n}")
        m = part.members[k]
        chunks.append(m[np.lexsort((m, -s[m]))])
    old_of_new = np.concatenate(chunks) if chunks else np.empty(0, dtype=np.int64)
    new_of_old = np.empty(n, dtype=np.int64)
    new_of_old[old_of_new] = np.arange(n)
    return ReorderMap.from_permutation(new_of_old, part)


def apply_reorder(g: Graph, roles: VertexRoles, part: PartitionMap, rmap: ReorderMap):
    """Relabel graph, roles and partition map; returns the three relabelled objects."""
    if rmap.num_vertices != g.num_vertices:
        raise ShapeError("reorder map size does not match the graph")
    p = rmap.new_of_old
    return g.relabel(p), roles.relabel(p), part.relabel(p)
