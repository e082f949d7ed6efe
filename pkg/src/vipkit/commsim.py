"""Epoch-level simulation of remote-feature communication under static caches.

Sampling never depends on the cache, so a run is split in two: the seeded
expansions of every minibatch are collected once into an ``AccessTrace``, and
any number of cache plans are then tallied against it. Counts are distinct
vertices per minibatch, summed over minibatches.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, ParameterError
from .graph import Graph, VertexRoles
from .partition import PartitionMap
from .policies import (POLICIES, CachePlan, build_cache, rank_by_scores, rank_degree,
                       rank_halo_1hop, rank_numpaths, rank_oracle, rank_sim, rank_vip, rank_wpr)
from .sampling import SeedSpec, check_fanouts, epoch_expansion, trace_rows, write_trace
from .vip import empirical_vip, partition_vip

DEFAULT_EPOCHS = 100


def fanout_label(fanouts) -> str:
    return "-".join(str(int(f)) for f in fanouts)


@dataclass(eq=False)
class AccessTrace:
    """Distinct expanded-neighbourhood vertices of every minibatch of a run.

    Global batch ``j`` belongs to ``epoch[j]``, ``partition[j]`` and has index
    ``batch_index[j]`` within its epoch; its vertices are
    ``vertices[ptr[j]:ptr[j+1]]``.
    """

    fanouts: tuple
    num_epochs: int
    num_parts: int
    num_vertices: int
    epoch: np.ndarray
    partition: np.ndarray
    batch_index: np.ndarray
    ptr: np.ndarray
    vertices: np.ndarray
    hop_rows: list = field(default=None, repr=False)

    @property
    def num_batches(self) -> int:
        return self.epoch.size

    def batch_of_vertex(self) -> np.ndarray:
        return np.repeat(np.arange(self.num_batches), np.diff(self.ptr))

    def access_counts(self, k: int) -> np.ndarray:
        """Number of partition-``k`` minibatches whose neighbourhood contains each vertex."""
        sel = np.repeat(self.partition == k, np.diff(self.ptr))
        return np.bincount(self.vertices[sel], minlength=self.num_vertices)

    def batch_vertices(self, j: int) -> np.ndarray:
        return self.vertices[self.ptr[j]:self.ptr[j + 1]]

    def write_csv(self, path) -> None:
        """Sampling trace: one row per (epoch, partition, batch_index, vertex, hop)."""
        if self.hop_rows is None:
            raise ParameterError("trace was collected without hop rows")
        rows = []
        for epoch, (ex, meta) in enumerate(self.hop_rows):
            rows.extend(trace_rows(epoch, ex, meta))
        write_trace(path, rows)


def collect_trace(g: Graph, roles: VertexRoles, part: PartitionMap, fanouts, b: int, E: int,
                  seeds: SeedSpec, key_ids=None, keep_hops: bool = False,
                  threads: int = 1) -> AccessTrace:
    fanouts = check_fanouts(fanouts)
    if E < 1:
        raise ParameterError("epoch count must be >= 1")

    def one(epoch):
        return epoch_expansion(g, roles, part, fanouts, b, epoch, seeds, key_ids=key_ids)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(one, range(E)))
    else:
        results = [one(e) for e in range(E)]

    ep, pa, bi, sizes, verts = [], [], [], [], []
    for epoch, (ex, meta) in enumerate(results):
        ptr, v = ex.all_vertices()
        ep.append(np.full(ex.num_batches, epoch, dtype=np.int64))
        pa.append(meta[:, 0])
        bi.append(meta[:, 1])
        sizes.append(np.diff(ptr))
        verts.append(v)
    ptr = np.zeros(sum(s.size for s in sizes) + 1, dtype=np.int64)
    np.cumsum(np.concatenate(sizes), out=ptr[1:])
    return AccessTrace(fanouts, E, part.K, g.num_vertices, np.concatenate(ep), np.concatenate(pa),
                       np.concatenate(bi), ptr, np.concatenate(verts),
                       results if keep_hops else None)


@dataclass(eq=False)
class CommReport:
    """Per-epoch, per-partition tallies; arrays have shape ``(epochs, K)``."""

    policy: str
    alpha: float
    fanouts: tuple
    local_hits: np.ndarray
    cache_hits: np.ndarray
    remote_misses: np.ndarray

    @property
    def num_epochs(self) -> int:
        return self.local_hits.shape[0]

    @property
    def avg_misses(self) -> float:
        """Average per-epoch remote misses, summed over partitions."""
        return float(self.remote_misses.sum(axis=1).mean())

    def improvement_over(self, baseline: "CommReport") -> float:
        mine, base = self.avg_misses, baseline.avg_misses
        if mine == 0:
            return math.inf if base > 0 else 1.0
        return base / mine

    def rows(self):
        for e in range(self.num_epochs):
            for k in range(self.local_hits.shape[1]):
                yield (self.policy, self.alpha, fanout_label(self.fanouts), e, k,
                       int(self.local_hits[e, k]), int(self.cache_hits[e, k]),
                       int(self.remote_misses[e, k]))


def classify(trace: AccessTrace, part: PartitionMap, plan: CachePlan):
    """Per-batch ``(local, cache_hit, remote_miss)`` counts."""
    if plan.K != part.K:
        raise ConfigError(f"cache plan has K={plan.K} but partition map has K={part.K}")
    owner = np.repeat(trace.partition, np.diff(trace.ptr))
    v = trace.vertices
    local = part.part_of[v] == owner
    cached = plan.masks[owner, v] & ~local
    seg = trace.batch_of_vertex()
    nb = trace.num_batches
    lc = np.bincount(seg, weights=local, minlength=nb).astype(np.int64)
    ch = np.bincount(seg, weights=cached, minlength=nb).astype(np.int64)
    rm = np.diff(trace.ptr) - lc - ch
    return lc, ch, rm


def tally(trace: AccessTrace, part: PartitionMap, plan: CachePlan, policy: str | None = None) -> CommReport:
    lc, ch, rm = classify(trace, part, plan)
    shape = (trace.num_epochs, trace.num_parts)
    out = []
    for arr in (lc, ch, rm):
        acc = np.zeros(shape, dtype=np.int64)
        np.add.at(acc, (trace.epoch, trace.partition), arr)
        out.append(acc)
    return CommReport(policy if policy is not None else plan.policy, plan.alpha, trace.fanouts, *out)


def no_cache_plan(part: PartitionMap) -> CachePlan:
    empty = tuple(np.empty(0, dtype=np.int64) for _ in range(part.K))
    return CachePlan(0.0, 0, empty, part.part_of.size, "none")


def simulate(g: Graph, roles: VertexRoles, part: PartitionMap, fanouts, b: int, E: int,
             seeds: SeedSpec, plan: CachePlan, key_ids=None) -> CommReport:
    """Run ``E`` seeded epochs on every partition and classify each accessed vertex."""
    if plan.K != part.K:
        raise ConfigError(f"cache plan has K={plan.K} but partition map has K={part.K}")
    return tally(collect_trace(g, roles, part, fanouts, b, E, seeds, key_ids), part, plan)


def h2d_volume(g: Graph, part: PartitionMap, k: int, ordering, gamma: float,
               trace: AccessTrace) -> np.ndarray:
    """Per-epoch host-to-device transfers of partition ``k``'s local vertices.

    The first ``floor(gamma * |members_k|)`` vertices of ``ordering`` live on
    the GPU; every distinct local vertex past that prefix that a minibatch
    touches costs one transfer.
    """
    if not 0.0 <= gamma <= 1.0:
        raise ParameterError("gamma must lie in [0, 1]")
    members = part.members[k]
    ordering = np.asarray(ordering, dtype=np.int64)
    if ordering.size != members.size or not np.array_equal(np.sort(ordering), members):
        raise ParameterError(f"ordering is not a permutation of partition {k}'s vertices")
    pos = np.full(g.num_vertices, -1, dtype=np.int64)
    pos[ordering] = np.arange(ordering.size)
    cut = int(math.floor(gamma * members.size + 1e-9))
    owner = np.repeat(trace.partition, np.diff(trace.ptr))
    epoch = np.repeat(trace.epoch, np.diff(trace.ptr))
    p = pos[trace.vertices]
    hit = (owner == k) & (p >= cut)
    return np.bincount(epoch[hit], minlength=trace.num_epochs).astype(np.int64)


# -- sweeps ---------------------------------------------------------------


def policy_rankings(policy: str, g, roles, part, fanouts, b, seeds: SeedSpec, trace: AccessTrace,
                    sim_epochs: int = 2):
    """One ranking per partition for a named policy."""
    fanouts = tuple(fanouts)
    L = len(fanouts)
    K = part.K
    if policy == "deg":
        return [rank_degree(g, roles, part, k, L) for k in range(K)]
    if policy == "1hop":
        return [rank_halo_1hop(g, part, k) for k in range(K)]
    if policy == "wpr":
        return [rank_wpr(g, roles, part, k) for k in range(K)]
    if policy == "paths":
        return [rank_numpaths(g, roles, part, k, L) for k in range(K)]
    if policy == "sim":
        sim_seeds = seeds.for_simulation()
        return [rank_sim(empirical_vip(g, roles, part, k, b, fanouts, sim_epochs, sim_seeds), part, k)
                for k in range(K)]
    if policy == "vip":
        return [rank_vip(partition_vip(g, roles, part, k, b, fanouts), part) for k in range(K)]
    if policy == "oracle":
        return [rank_oracle(trace.access_counts(k), part, k) for k in range(K)]
    raise ParameterError(f"unknown policy {policy!r}; choose from {POLICIES}")


def geomean(values) -> float:
    values = [float(v) for v in values]
    if not values:
        raise ParameterError("geomean of an empty sequence")
    if any(v <= 0 for v in values):
        return 0.0
    if any(math.isinf(v) for v in values):
        return math.inf
    return math.exp(sum(math.log(v) for v in values) / len(values))


@dataclass(eq=False)
class SweepResult:
    reports: list
    baselines: dict
    rankings: dict = field(default_factory=dict, repr=False)
    traces: dict = field(default_factory=dict, repr=False)

    def get(self, policy, alpha, fanouts) -> CommReport:
        for r in self.reports:
            if r.policy == policy and r.alpha == alpha and tuple(r.fanouts) == tuple(fanouts):
                return r
        raise KeyError((policy, alpha, fanouts))

    def summary_rows(self):
        """``(policy, alpha, fanouts, avg_misses, improvement_vs_nocache)``."""
        for r in self.reports:
            base = self.baselines[tuple(r.fanouts)]
            yield (r.policy, r.alpha, fanout_label(r.fanouts), r.avg_misses, r.improvement_over(base))

    def geomean_improvement(self, policy, alpha) -> float:
        return geomean(r.improvement_over(self.baselines[tuple(r.fanouts)]) for r in self.reports
                       if r.policy == policy and r.alpha == alpha)

    def write_csv(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["policy", "alpha", "fanouts", "epoch", "partition",
                        "local_hits", "cache_hits", "remote_misses"])
            for r in self.reports:
                w.writerows(r.rows())

    def write_summary(self, path, header: str | None = None) -> None:
        with open(path, "w", newline="") as fh:
            if header:
                fh.write(f"# {header}\n")
            w = csv.writer(fh)
            w.writerow(["policy", "alpha", "fanouts", "avg_misses", "improvement_vs_nocache"])
            for policy, alpha, fl, misses, imp in self.summary_rows():
                w.writerow([policy, alpha, fl, repr(misses), repr(imp)])


def sweep(g: Graph, roles: VertexRoles, part: PartitionMap, fanouts_list, b: int, E: int,
          alphas, policies, seeds: SeedSpec, sim_epochs: int = 2, threads: int = 1,
          keep_traces: bool = False) -> SweepResult:
    """Evaluate every (policy, alpha, fanouts) cell on the same seeded epochs.

    The oracle is ranked from the access counts of the very run it is scored
    on, which makes it a retrospective lower bound.
    """
    fanouts_list = [check_fanouts(f) for f in fanouts_list]
    alphas = [float(a) for a in alphas]
    policies = list(policies)
    if not fanouts_list or not alphas or not policies:
        raise ParameterError("sweep grids must be non-empty")
    for p in policies:
        if p not in POLICIES:
            raise ParameterError(f"unknown policy {p!r}; choose from {POLICIES}")
    reports, baselines, rankings, traces = [], {}, {}, {}
    for fanouts in fanouts_list:
        trace = collect_trace(g, roles, part, fanouts, b, E, seeds, threads=threads)
        if keep_traces:
            traces[fanouts] = trace
        baselines[fanouts] = tally(trace, part, no_cache_plan(part), "none")

        def cell(policy):
            ranks = policy_rankings(policy, g, roles, part, fanouts, b, seeds, trace, sim_epochs)
            return ranks, [tally(trace, part, build_cache(ranks, a, g.num_vertices), policy)
                           for a in alphas]

        if threads > 1:
            with ThreadPoolExecutor(threads) as pool:
                results = list(pool.map(cell, policies))
        else:
            results = [cell(p) for p in policies]
        for policy, (ranks, reps) in zip(policies, results):
            rankings[(policy, fanouts)] = ranks
            reports.extend(reps)
    return SweepResult(reports, baselines, rankings, traces)


__all__ = [
    "AccessTrace", "CommReport", "SweepResult", "collect_trace", "classify", "tally", "simulate",
    "sweep", "h2d_volume", "no_cache_plan", "policy_rankings", "geomean", "fanout_label",
    "rank_by_scores", "DEFAULT_EPOCHS",
]
