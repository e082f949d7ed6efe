"""Node-wise minibatch neighbourhood expansion with reproducible randomness.

All randomness is drawn from counter-based hashes keyed by
``(global_seed, domain, epoch, partition, batch_index, hop, vertex)``, so a
batch's expansion does not depend on which other batches were expanded, in
what order, or on how many threads were used.

Subsets are drawn by giving each neighbour a hashed random key and keeping
the ``f`` smallest. That is an exactly uniform without-replacement sample,
and because the key depends on neighbour *identity* rather than slot
position, relabelling the graph (with ``key_ids`` carrying the old ids)
reproduces the same samples.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from . import _hash
from .errors import ParameterError, SamplingError
from .graph import Graph, VertexRoles
from .partition import PartitionMap

EVALUATION = 0
SIMULATION = 1


@dataclass(frozen=True)
class SeedSpec:
    """Root of all sampling streams.

    ``domain`` separates evaluation epochs from the epochs simulated by the
    empirical ("sim.") policy, so the two never share randomness.
    """

    global_seed: int = 0
    domain: int = EVALUATION

    def epoch_stream(self, epoch: int, partition: int) -> np.uint64:
        return _hash.key(self.global_seed, self.domain, epoch, partition, 0xE9)

    def batch_stream(self, epoch: int, partition: int, batch_index: int) -> np.uint64:
        return _hash.key(self.global_seed, self.domain, epoch, partition, batch_index)

    def for_simulation(self) -> "SeedSpec":
        return SeedSpec(self.global_seed, SIMULATION)


def check_fanouts(fanouts) -> tuple:
    fanouts = tuple(int(f) for f in fanouts)
    if len(fanouts) < 1 or min(fanouts) < 1:
        raise ParameterError(f"fanouts must be a non-empty sequence of positive ints, got {fanouts}")
    return fanouts


def _key_ids(g: Graph, key_ids):
    if key_ids is None:
        return np.arange(g.num_vertices, dtype=np.int64)
    key_ids = np.asarray(key_ids, dtype=np.int64)
    if key_ids.shape != (g.num_vertices,):
        raise ParameterError("key_ids must have one entry per vertex")
    return key_ids


def epoch_minibatches(roles: VertexRoles, part: PartitionMap, k: int, b: int, epoch: int,
                      seeds: SeedSpec, key_ids=None) -> list:
    """Seeded uniform shuffle of partition ``k``'s train vertices, cut into batches of ``b``.

    The last batch keeps the remainder. Each batch is returned sorted.
    """
    if b < 1:
        raise ParameterError("batch size must be >= 1")
    train = part.train_members(roles, k)
    if train.size == 0:
        raise SamplingError(f"partition {k} has no train vertices")
    kid = np.arange(len(roles), dtype=np.int64) if key_ids is None else np.asarray(key_ids)
    tk = kid[train]
    r = _hash.mix(seeds.epoch_stream(epoch, k), tk)
    shuffled = train[np.lexsort((tk, r))]
    return [np.sort(shuffled[i:i + b]) for i in range(0, shuffled.size, b)]


def _sample_slots(g: Graph, owners, streams, f: int, kid):
    """Sample up to ``f`` out-neighbours for every entry of ``owners``.

    Returns ``(owner_index, neighbour)`` pairs; ``owner_index`` indexes
    ``owners``. ``streams[i]`` keys the draw made for ``owners[i]``.
    """
    deg = g.out_degree[owners]
    total = int(deg.sum())
    if total == 0:
        return np.empty(0, dtype=np.int64), np.empty(0, dtype=np.int64)
    seg = np.repeat(np.arange(owners.size, dtype=np.int64), deg)
    seg_start = np.cumsum(deg) - deg
    pos = np.arange(total, dtype=np.int64) - np.repeat(seg_start - g.forward_offsets[owners], deg)
    nbr = g.forward_targets[pos]
    big = deg > f
    if not big.any():
        return seg, nbr
    in_big = big[seg]
    bseg, bnbr = seg[in_big], nbr[in_big]
    r = _hash.mix(streams[bseg], kid[bnbr])
    order = np.lexsort((kid[bnbr], r, bseg))
    sseg = bseg[order]
    first = np.flatnonzero(np.r_[True, sseg[1:] != sseg[:-1]])
    rank = np.arange(sseg.size) - np.repeat(first, np.diff(np.r_[first, sseg.size]))
    chosen = order[rank < f]
    seg = np.concatenate([seg[~in_big], bseg[chosen]])
    nbr = np.concatenate([nbr[~in_big], bnbr[chosen]])
    return seg, nbr


def sample_neighbors(g: Graph, v: int, f: int, stream, key_ids=None) -> np.ndarray:
    """All out-neighbours of ``v`` if it has at most ``f``, else a uniform ``f``-subset."""
    kid = _key_ids(g, key_ids)
    owners = np.array([v], dtype=np.int64)
    vstream = _hash.mix(np.array([stream], dtype=np.uint64), kid[owners])
    _, nbr = _sample_slots(g, owners, vstream, int(f), kid)
    return np.sort(nbr)


@dataclass(frozen=True, eq=False)
class ExpandedNeighborhood:
    """Hop-wise distinct frontiers of one minibatch; ``frontiers[0]`` is the batch."""

    frontiers: tuple
    all_vertices: np.ndarray

    @property
    def batch(self) -> np.ndarray:
        return self.frontiers[0]

    def frontier(self, h: int) -> np.ndarray:
        return self.frontiers[h]

    @property
    def num_hops(self) -> int:
        return len(self.frontiers) - 1


@dataclass(eq=False)
class BatchExpansion:
    """Expansions of many minibatches in flat form.

    One row per distinct ``(batch, hop, vertex)``; rows are grouped by hop and
    sorted by ``(batch, vertex)`` within a hop.
    """

    num_batches: int
    batch: np.ndarray
    hop: np.ndarray
    vertex: np.ndarray
    num_vertices: int
    _all: tuple = field(default=None, repr=False)

    def all_vertices(self):
        """``(batch_ptr, vertices)``: distinct vertices of batch ``j`` are
        ``vertices[batch_ptr[j]:batch_ptr[j+1]]`` in increasing order."""
        if self._all is None:
            uniq = np.unique(self.batch * self.num_vertices + self.vertex)
            bid = uniq // self.num_vertices
            ptr = np.zeros(self.num_batches + 1, dtype=np.int64)
            np.cumsum(np.bincount(bid, minlength=self.num_batches), out=ptr[1:])
            self._all = (ptr, uniq % self.num_vertices)
        return self._all

    def neighborhood(self, j: int) -> ExpandedNeighborhood:
        rows = self.batch == j
        hops = int(self.hop.max()) + 1 if self.hop.size else 1
        fr = tuple(np.sort(self.vertex[rows & (self.hop == h)]) for h in range(hops))
        ptr, verts = self.all_vertices()
        return ExpandedNeighborhood(fr, verts[ptr[j]:ptr[j + 1]].copy())


def expand_many(g: Graph, batches, fanouts, streams, key_ids=None) -> BatchExpansion:
    """Expand every batch independently; ``streams[j]`` keys batch ``j``."""
    fanouts = check_fanouts(fanouts)
    kid = _key_ids(g, key_ids)
    n = g.num_vertices
    streams = np.asarray(streams, dtype=np.uint64).ravel()
    batches = [np.unique(np.asarray(bt, dtype=np.int64)) for bt in batches]
    if len(streams) != len(batches):
        raise ParameterError("need one stream per batch")
    lens = np.array([bt.size for bt in batches], dtype=np.int64)
    bid = np.repeat(np.arange(len(batches), dtype=np.int64), lens)
    cur = np.concatenate(batches) if batches else np.empty(0, dtype=np.int64)
    rows_b, rows_h, rows_v = [bid], [np.zeros(cur.size, dtype=np.int8)], [cur]
    for h, f in enumerate(fanouts, 1):
        if cur.size == 0:
            break
        vstream = _hash.mix(_hash.mix(streams[bid], h), kid[cur])
        owner, nbr = _sample_slots(g, cur, vstream, f, kid)
        uniq = np.unique(bid[owner] * n + nbr)
        bid, cur = uniq // n, uniq % n
        rows_b.append(bid)
        rows_h.append(np.full(cur.size, h, dtype=np.int8))
        rows_v.append(cur)
    return BatchExpansion(len(batches), np.concatenate(rows_b), np.concatenate(rows_h),
                          np.concatenate(rows_v), n)


def expand(g: Graph, batch, fanouts, stream, key_ids=None) -> ExpandedNeighborhood:
    """Expand one minibatch for ``len(fanouts)`` hops, first fanout nearest the batch."""
    batch = np.asarray(batch, dtype=np.int64)
    if batch.size == 0:
        raise ParameterError("batch must be non-empty")
    fanouts = check_fanouts(fanouts)
    ex = expand_many(g, [batch], fanouts, [stream], key_ids)
    nb = ex.neighborhood(0)
    # pad frontiers that died out early
    fr = nb.frontiers + tuple(np.empty(0, dtype=np.int64)
                              for _ in range(len(fanouts) + 1 - len(nb.frontiers)))
    return ExpandedNeighborhood(fr, nb.all_vertices)


def epoch_expansion(g: Graph, roles: VertexRoles, part: PartitionMap, fanouts, b: int,
                    epoch: int, seeds: SeedSpec, partitions=None, key_ids=None):
    """Expand every minibatch of one epoch for the given partitions.

    Returns ``(expansion, meta)`` where ``meta`` is an int array of rows
    ``(partition, batch_index)`` aligned with the expansion's batch ids.
    """
    parts = range(part.K) if partitions is None else partitions
    batches, streams, meta = [], [], []
    for k in parts:
        for i, bt in enumerate(epoch_minibatches(roles, part, k, b, epoch, seeds, key_ids)):
            batches.append(bt)
            streams.append(seeds.batch_stream(epoch, k, i))
            meta.append((k, i))
    ex = expand_many(g, batches, fanouts, np.array(streams, dtype=np.uint64), key_ids)
    return ex, np.array(meta, dtype=np.int64).reshape(-1, 2)


def write_trace(path, rows) -> None:
    """Write ``(epoch, partition, batch_index, vertex, hop)`` rows as CSV."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "partition", "batch_index", "vertex", "hop"])
        w.writerows(rows)


def trace_rows(epoch: int, ex: BatchExpansion, meta):
    order = np.lexsort((ex.hop, ex.vertex, ex.batch))
    for j in order:
        k, i = meta[ex.batch[j]]
        yield (epoch, int(k), int(i), int(ex.vertex[j]), int(ex.hop[j]))
