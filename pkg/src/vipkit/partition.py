"""Vertex partitions and simple built-in partitioners.

``bfs_greedy`` is an approximate stand-in for METIS: it balances vertex and
training-vertex counts exactly but ignores edge balance and only heuristically
reduces edge cut. Externally computed labels are read with ``from_file``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError, PartitionError
from .graph import Graph, VertexRoles, _frozen, _read_int_lines


@dataclass(frozen=True, eq=False)
class PartitionMap:
    part_of: np.ndarray
    num_parts: int

    def __post_init__(self):
        part_of = _frozen(self.part_of)
        if part_of.size and (part_of.min() < 0 or part_of.max() >= self.num_parts):
            raise FormatError("partition label out of range")
        object.__setattr__(self, "part_of", part_of)
        order = np.argsort(part_of, kind="stable")
        bounds = np.searchsorted(part_of[order], np.arange(self.num_parts + 1))
        object.__setattr__(self, "_members", tuple(_frozen(order[bounds[k]:bounds[k + 1]])
                                                  for k in range(self.num_parts)))

    @property
    def K(self) -> int:
        return self.num_parts

    @property
    def members(self) -> tuple:
        """Ascending vertex ids of every partition."""
        return self._members

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.part_of, minlength=self.num_parts)

    def train_members(self, roles: VertexRoles, k: int) -> np.ndarray:
        m = self._members[k]
        return m[roles.train_mask[m]]

    def remote_mask(self, k: int) -> np.ndarray:
        return self.part_of != k

    def relabel(self, new_of_old) -> "PartitionMap":
        out = np.empty_like(self.part_of)
        out[np.asarray(new_of_old)] = self.part_of
        return PartitionMap(out, self.num_parts)


def _quotas(n, n_train, K):
    vq = np.full(K, n // K)
    vq[: n % K] += 1
    tq = np.full(K, n_train // K)
    tq[: n_train % K] += 1
    return tq, vq - tq


def _check_nonempty(part_of, K):
    sizes = np.bincount(part_of, minlength=K)
    if np.any(sizes == 0):
        raise PartitionError(f"partition {int(np.argmin(sizes))} is empty")


def _canonical_labels(part_of, K):
    """Renumber partitions by their smallest member id."""
    first = np.full(K, np.iinfo(np.int64).max)
    np.minimum.at(first, part_of, np.arange(part_of.size))
    rank = np.empty(K, dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(K)
    return rank[part_of]


def _random_partition(roles, K, seed):
    n = len(roles)
    train = roles.train_mask
    tq, oq = _quotas(n, int(train.sum()), K)
    rng = np.random.default_rng(seed)
    part_of = np.empty(n, dtype=np.int64)
    for mask, quota in ((train, tq), (~train, oq)):
        ids = rng.permutation(np.flatnonzero(mask))
        part_of[ids] = np.repeat(np.arange(K), quota)
    return part_of


def _bfs_far(g, sources, n):
    dist = np.full(n, -1, dtype=np.int64)
    q = deque()
    for s in sources:
        dist[s] = 0
        q.append(s)
    while q:
        v = q.popleft()
        for u in g.neighbors(v):
            if dist[u] < 0:
                dist[u] = dist[v] + 1
                q.append(u)
    # unreachable vertices count as farthest
    dist[dist < 0] = n + 1
    dist[np.asarray(sources)] = -1
    return int(np.argmax(dist))


def _bfs_greedy_partition(g, roles, K, seed):
    n = g.num_vertices
    train = roles.train_mask
    tq, oq = _quotas(n, int(train.sum()), K)
    rng = np.random.default_rng(seed)

    start = _bfs_far(g, [int(rng.integers(n))], n)
    seeds = [start]
    while len(seeds) < K:
        seeds.append(_bfs_far(g, seeds, n))

    part_of = np.full(n, -1, dtype=np.int64)
    t_cnt = np.zeros(K, dtype=np.int64)
    o_cnt = np.zeros(K, dtype=np.int64)
    queues = [deque([s]) for s in seeds]
    # next unassigned vertex of each role class, for regrowth after a queue empties
    cursor = {True: 0, False: 0}

    def fits(k, v):
        return t_cnt[k] < tq[k] if train[v] else o_cnt[k] < oq[k]

    def next_free(k):
        for cls in (True, False):
            if (cls and t_cnt[k] >= tq[k]) or (not cls and o_cnt[k] >= oq[k]):
                continue
            i = cursor[cls]
            while i < n and (part_of[i] >= 0 or bool(train[i]) != cls):
                i += 1
            cursor[cls] = i
            if i < n:
                return i
        return -1

    for _ in range(n):
        open_parts = [k for k in range(K) if t_cnt[k] < tq[k] or o_cnt[k] < oq[k]]
        # most train-starved first, then fewest vertices, then lowest index
        k = min(open_parts, key=lambda j: (t_cnt[j] - tq[j] if t_cnt[j] < tq[j] else 0,
                                           t_cnt[j] + o_cnt[j], j))
        q = queues[k]
        v = -1
        while q:
            c = q.popleft()
            if part_of[c] < 0 and fits(k, c):
                v = c
                break
        if v < 0:
            v = next_free(k)
        part_of[v] = k
        if train[v]:
            t_cnt[k] += 1
        else:
            o_cnt[k] += 1
        q.extend(int(u) for u in g.neighbors(v) if part_of[u] < 0)
    return part_of


def read_partition_labels(path, num_vertices: int, K: int | None = None) -> np.ndarray:
    labels = _read_int_lines(path, "partition label")
    if labels.size != num_vertices:
        raise FormatError(f"{path}: expected {num_vertices} labels, found {labels.size}")
    if labels.size and labels.min() < 0:
        raise FormatError(f"{path}: negative partition label")
    if K is not None and labels.size and labels.max() >= K:
        raise FormatError(f"{path}: label {int(labels.max())} out of range for K={K}")
    return labels


def write_partition_labels(part: PartitionMap, path, header: str | None = None) -> None:
    with open(path, "w") as fh:
        if header:
            fh.write(f"# {header}\n")
        fh.write("\n".join(map(str, part.part_of.tolist())))
        fh.write("\n")


def partition_graph(g: Graph, roles: VertexRoles, K: int, method: str = "bfs_greedy",
                    seed: int = 0, path=None) -> PartitionMap:
    """Split the vertices into ``K`` parts.

    ``random`` and ``bfs_greedy`` keep every part's vertex count within one of
    n/K and its train count within one of |T|/K. Parts are numbered by their
    smallest vertex id.
    """
    if K < 1:
        raise ParameterError("K must be >= 1")
    n = g.num_vertices
    if len(roles) != n:
        raise ParameterError("roles length does not match the graph")
    if method == "from_file":
        if path is None:
            raise ParameterError("from_file needs a label file path")
        part_of = read_partition_labels(path, n, K)
        _check_nonempty(part_of, K)
        return PartitionMap(part_of, K)
    if K > n:
        raise PartitionError(f"cannot split {n} vertices into {K} non-empty parts")
    if method == "random":
        part_of = _random_partition(roles, K, seed)
    elif method == "bfs_greedy":
        part_of = _bfs_greedy_partition(g, roles, K, seed)
    else:
        raise ParameterError(f"unknown partition method {method!r}")
    _check_nonempty(part_of, K)
    return PartitionMap(_canonical_labels(part_of, K), K)
