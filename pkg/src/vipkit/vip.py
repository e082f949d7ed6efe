"""Analytic vertex inclusion probabilities and their empirical counterpart.

For hop ``h`` a vertex ``u`` is missed only if every in-neighbour ``v``
either was absent at hop ``h-1`` or did not pick ``u``::

    p_h(u) = 1 - prod_{v -> u} (1 - w_h(v) * p_{h-1}(v))
    p(u)   = 1 - prod_{h=1..L} (1 - p_h(u))

with ``w_h(v) = min(1, f_h / outdeg(v))`` for uniform node-wise sampling.
Products are accumulated as sums of ``log1p`` terms in reverse-CSR order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, SamplingError, ShapeError
from .graph import Graph, VertexRoles
from .partition import PartitionMap
from .sampling import SeedSpec, check_fanouts, epoch_expansion

_FLUSH = 1e-300


@dataclass(frozen=True)
class TransitionModel:
    """Uniform fanout transition: ``v`` picks each out-neighbour w.p. ``min(1, f_h/deg(v))``."""

    fanouts: tuple
    kind: str = "uniform_fanout"

    def __post_init__(self):
        object.__setattr__(self, "fanouts", check_fanouts(self.fanouts))
        if self.kind != "uniform_fanout":
            raise ParameterError(f"unsupported transition model {self.kind!r}")

    @property
    def num_hops(self) -> int:
        return len(self.fanouts)

    def pick_prob(self, g: Graph, h: int) -> np.ndarray:
        """Per-source probability of selecting any given out-neighbour at hop ``h`` (1-based)."""
        deg = g.out_degree.astype(np.float64)
        with np.errstate(divide="ignore"):
            w = np.minimum(1.0, self.fanouts[h - 1] / deg)
        w[deg == 0] = 0.0
        return w


@dataclass(frozen=True, eq=False)
class VipScores:
    partition: int
    p0: np.ndarray
    hops: tuple
    total: np.ndarray

    @property
    def num_hops(self) -> int:
        return len(self.hops)

    def hop(self, h: int) -> np.ndarray:
        """``p_h`` for ``h`` in 1..L (``hop(0)`` is the initial vector)."""
        return self.p0 if h == 0 else self.hops[h - 1]

    def write_binary(self, path) -> None:
        self.total.astype("<f8").tofile(path)

    def write_csv(self, path, comment: str | None = None) -> None:
        cols = [np.arange(self.total.size), self.total, *self.hops]
        header = "vertex,total," + ",".join(f"hop{h}" for h in range(1, self.num_hops + 1))
        if comment:
            header = f"# {comment}\n{header}"
        fmt = ["%d"] + ["%.17g"] * (len(cols) - 1)
        np.savetxt(path, np.column_stack(cols), fmt=fmt, delimiter=",", header=header, comments="")


def read_vip_binary(path, num_vertices: int | None = None) -> np.ndarray:
    v = np.fromfile(path, dtype="<f8").astype(np.float64)
    if num_vertices is not None and v.size != num_vertices:
        raise ShapeError(f"{path}: expected {num_vertices} values, found {v.size}")
    return v


def initial_probs(roles: VertexRoles, part: PartitionMap, k: int, b: int) -> np.ndarray:
    """``min(1, b/|T_k|)`` on partition ``k``'s train vertices, 0 elsewhere."""
    if b < 1:
        raise ParameterError("batch size must be >= 1")
    train = part.train_members(roles, k)
    if train.size == 0:
        raise SamplingError(f"partition {k} has no train vertices")
    p0 = np.zeros(len(roles), dtype=np.float64)
    p0[train] = min(1.0, b / train.size)
    return p0


def propagate(g: Graph, tm: TransitionModel, p0, partition: int = 0) -> VipScores:
    """Push initial inclusion probabilities through ``len(tm.fanouts)`` hops.

    One pass over the reverse adjacency per hop, O(L (m + n)).
    """
    p0 = np.asarray(p0, dtype=np.float64)
    if p0.shape != (g.num_vertices,):
        raise ShapeError(f"p0 must have length {g.num_vertices}")
    if np.any((p0 < 0) | (p0 > 1)):
        raise ParameterError("p0 entries must lie in [0, 1]")
    n = g.num_vertices
    # 32-bit indices halve the memory traffic of the per-hop gather
    src = g.reverse_targets.astype(np.int32) if n < 2**31 else g.reverse_targets
    starts = np.minimum(g.reverse_offsets[:-1], max(src.size - 1, 0))
    no_in = g.in_degree == 0
    prev = p0
    log_miss_total = np.zeros(n)
    hops = []
    for h in range(1, tm.num_hops + 1):
        x = tm.pick_prob(g, h) * prev
        with np.errstate(divide="ignore"):
            lx = np.log1p(-np.minimum(x, 1.0))
        if src.size:
            log_miss = np.add.reduceat(np.take(lx, src), starts)
            log_miss[no_in] = 0.0
        else:
            log_miss = np.zeros(n)
        ph = np.clip(-np.expm1(log_miss), 0.0, 1.0)
        ph[ph < _FLUSH] = 0.0
        hops.append(ph)
        with np.errstate(divide="ignore"):
            log_miss_total += np.log1p(-ph)
        prev = ph
    total = np.clip(-np.expm1(log_miss_total), 0.0, 1.0)
    total[total < _FLUSH] = 0.0
    return VipScores(partition, p0, tuple(hops), total)


def partition_vip(g: Graph, roles: VertexRoles, part: PartitionMap, k: int, b: int,
                  fanouts) -> VipScores:
    return propagate(g, TransitionModel(tuple(fanouts)), initial_probs(roles, part, k, b), k)


def empirical_vip(g: Graph, roles: VertexRoles, part: PartitionMap, k: int, b: int, fanouts,
                  S: int, seeds: SeedSpec) -> np.ndarray:
    """Fraction of partition ``k``'s minibatches, over ``S`` simulated epochs, that touch each vertex.

    Uses ``seeds`` as given; pass ``seeds.for_simulation()`` to keep the
    estimate independent of evaluation epochs.
    """
    if S < 1:
        raise ParameterError("S must be >= 1")
    counts = np.zeros(g.num_vertices, dtype=np.int64)
    batches = 0
    for epoch in range(S):
        ex, meta = epoch_expansion(g, roles, part, fanouts, b, epoch, seeds, partitions=[k])
        _, verts = ex.all_vertices()
        counts += np.bincount(verts, minlength=g.num_vertices)
        batches += ex.num_batches
    return counts / batches
