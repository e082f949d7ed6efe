"""Discrete-event cost model of the 10-stage distributed minibatch pipeline.

Stages and the resource each one occupies:

====  ==========  ====================================================
 1    sampler     fetch the next sampled minibatch
 2    nic         all-to-all of per-peer request counts
 3    pcie        copy the counts to host memory
 4    nic         all-to-all of requested vertex id lists
 5    pcie        device-to-host copy of the lists received
 6    cpu_slice   split requests CPU/GPU, slice CPU-resident features
 7    pcie        host-to-device copy of the CPU slices
 8    gpu         slice GPU-resident local features and the remote cache
 9    nic         all-to-all of the requested remote features
 10   gpu         assemble the feature tensor, then model compute
====  ==========  ====================================================

Machines advance in lockstep: each stage lasts as long as its slowest
machine. All-to-all rounds cost ``latency + max send bytes / bandwidth``.
Resources are exclusive and serve waiting stages first-come first-served.
"""

from __future__ import annotations

import csv
import heapq
import json
import math
from collections import deque
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ConfigError, ParameterError

RESOURCES = ("sampler", "nic", "pcie", "cpu_slice", "gpu")
STAGE_RESOURCE = ("sampler", "nic", "pcie", "nic", "pcie", "cpu_slice", "pcie", "gpu", "nic", "gpu")
NUM_STAGES = len(STAGE_RESOURCE)


@dataclass(frozen=True)
class ClusterConfig:
    K: int = 4
    net_bandwidth: float = 3.125e9      # bytes/s per machine (25 Gb/s)
    net_latency: float = 20e-6          # s per all-to-all round
    h2d_bandwidth: float = 12e9         # bytes/s
    h2d_latency: float = 10e-6          # s per transfer
    sampler_throughput: float = 400.0   # batches/s
    gpu_compute: float = 2e-3           # s per batch
    feature_bytes: int = 512            # bytes per vertex feature vector
    in_flight: int = 10
    cpu_slice_bandwidth: float = 10e9   # bytes/s
    gpu_slice_bandwidth: float = 500e9  # bytes/s
    metadata_bytes: int = 64            # per peer, stages 2-5

    def __post_init__(self):
        if self.K < 1:
            raise ConfigError("K must be >= 1")
        if self.in_flight < 1:
            raise ConfigError("in_flight must be >= 1")
        for f in ("net_bandwidth", "h2d_bandwidth", "sampler_throughput", "cpu_slice_bandwidth",
                  "gpu_slice_bandwidth"):
            if not getattr(self, f) > 0:
                raise ConfigError(f"{f} must be > 0")
        for f in ("net_latency", "h2d_latency", "gpu_compute", "feature_bytes", "metadata_bytes"):
            if getattr(self, f) < 0:
                raise ConfigError(f"{f} must be >= 0")

    @classmethod
    def from_dict(cls, d: dict) -> "ClusterConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown cluster config keys: {sorted(unknown)}")
        return cls(**{k: (float(v) if isinstance(v, str) else v) for k, v in d.items()})

    @classmethod
    def from_json(cls, path) -> "ClusterConfig":
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class BatchCost:
    """Per-machine distinct-vertex counts of one pipeline step.

    ``served[i]`` is the number of feature vectors machine ``i`` sends to its
    peers in the final all-to-all; it defaults to ``remote_miss`` (symmetric
    traffic) when owners are unknown.
    """

    local_cpu: np.ndarray
    local_gpu: np.ndarray
    cache_hit: np.ndarray
    remote_miss: np.ndarray
    served: np.ndarray | None = None

    def __post_init__(self):
        for f in ("local_cpu", "local_gpu", "cache_hit", "remote_miss", "served"):
            v = getattr(self, f)
            if v is None:
                continue
            v = np.asarray(v, dtype=np.float64)
            if np.any(v < 0):
                raise ParameterError(f"{f} counts must be non-negative")
            object.__setattr__(self, f, v)

    @property
    def total(self) -> np.ndarray:
        return self.local_cpu + self.local_gpu + self.cache_hit + self.remote_miss

    @property
    def sent(self) -> np.ndarray:
        return self.remote_miss if self.served is None else self.served


def stage_times(cost: BatchCost, cfg: ClusterConfig) -> np.ndarray:
    F = cfg.feature_bytes
    peers = max(cfg.K - 1, 0)
    meta_net = cfg.net_latency + cfg.metadata_bytes * peers / cfg.net_bandwidth
    meta_pcie = cfg.h2d_latency + cfg.metadata_bytes * cfg.K / cfg.h2d_bandwidth
    cpu_rows = np.max(cost.local_cpu + cost.sent)
    return np.array([
        1.0 / cfg.sampler_throughput,
        meta_net,
        meta_pcie,
        meta_net,
        meta_pcie,
        cpu_rows * F / cfg.cpu_slice_bandwidth,
        cfg.h2d_latency + cpu_rows * F / cfg.h2d_bandwidth,
        np.max(cost.local_gpu + cost.cache_hit) * F / cfg.gpu_slice_bandwidth,
        cfg.net_latency + np.max(cost.sent) * F / cfg.net_bandwidth,
        np.max(cost.total) * F / cfg.gpu_slice_bandwidth + cfg.gpu_compute,
    ])


@dataclass(eq=False)
class PipelineResult:
    makespan: float
    busy: dict
    records: list  # (batch, stage, start, end, resource)
    pipelined: bool

    @property
    def utilization(self) -> dict:
        if self.makespan == 0:
            return {r: 0.0 for r in self.busy}
        return {r: b / self.makespan for r, b in self.busy.items()}

    @property
    def total_work(self) -> float:
        return float(sum(self.busy.values()))

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["batch", "stage", "start", "end", "resource"])
            for b, s, st, en, r in self.records:
                w.writerow([b, s, repr(st), repr(en), r])
            w.writerow(["summary", "makespan", 0.0, repr(self.makespan), "all"])

    def write_timeline(self, path) -> None:
        """Per-resource busy intervals, one row each, for lane plots."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["resource", "start", "end", "batch", "stage"])
            for b, s, st, en, r in sorted(self.records, key=lambda x: (RESOURCES.index(x[4]), x[2])):
                w.writerow([r, repr(st), repr(en), b, s])


def simulate_pipeline(costs, cfg: ClusterConfig, pipelined: bool = True) -> PipelineResult:
    """Play the batches through the stage graph and return the schedule.

    With ``pipelined`` up to ``cfg.in_flight`` batches are admitted at once;
    otherwise each batch starts after the previous one completes.
    """
    costs = list(costs)
    if not costs:
        raise ParameterError("need at least one batch")
    durations = [stage_times(c, cfg).tolist() for c in costs]
    window = cfg.in_flight if pipelined else 1
    nb = len(costs)

    events = []  # (time, kind, seq, payload); kind 0 = finish, 1 = ready
    seq = 0

    def push(t, kind, payload):
        nonlocal seq
        heapq.heappush(events, (t, kind, seq, payload))
        seq += 1

    waiting = {r: deque() for r in RESOURCES}
    idle = {r: True for r in RESOURCES}
    busy = {r: 0.0 for r in RESOURCES}
    records = []
    makespan = 0.0

    for b in range(min(window, nb)):
        push(0.0, 1, (b, 0))
    admitted = min(window, nb)

    def dispatch(res, now):
        if idle[res] and waiting[res]:
            b, s = waiting[res].popleft()
            end = now + durations[b][s]
            idle[res] = False
            records.append((b, s + 1, now, end, res))
            busy[res] += durations[b][s]
            push(end, 0, (b, s))

    while events:
        now, kind, _, (b, s) = heapq.heappop(events)
        res = STAGE_RESOURCE[s]
        if kind == 1:
            waiting[res].append((b, s))
            dispatch(res, now)
            continue
        idle[res] = True
        if s + 1 < NUM_STAGES:
            push(now, 1, (b, s + 1))
        else:
            makespan = max(makespan, now)
            if admitted < nb:
                push(now, 1, (admitted, 0))
                admitted += 1
        dispatch(res, now)
    return PipelineResult(float(makespan), busy, records, pipelined)


def costs_from_trace(trace, part, plan=None, orderings=None, gamma: float = 0.0, epoch: int = 0):
    """Pipeline steps from one epoch of an ``AccessTrace``.

    Step ``i`` gathers minibatch ``i`` of every partition. ``orderings[k]``
    lists partition ``k``'s vertices in storage order; the first
    ``floor(gamma |members_k|)`` are GPU-resident.
    """
    K = part.K
    n = part.part_of.size
    pos = np.empty(n, dtype=np.int64)
    cut = np.empty(K, dtype=np.int64)
    for k in range(K):
        order = part.members[k] if orderings is None else np.asarray(orderings[k])
        pos[order] = np.arange(order.size)
        cut[k] = int(math.floor(gamma * part.members[k].size + 1e-9))
    sel = np.flatnonzero(trace.epoch == epoch)
    if sel.size == 0:
        raise ParameterError(f"trace has no batches for epoch {epoch}")
    steps = int(trace.batch_index[sel].max()) + 1
    acc = np.zeros((5, steps, K))
    served = np.zeros((steps, K))
    for j in sel:
        k, i = trace.partition[j], trace.batch_index[j]
        v = trace.batch_vertices(j)
        owner = part.part_of[v]
        local = owner == k
        hit = plan.masks[k, v] & ~local if plan is not None else np.zeros(v.size, dtype=bool)
        miss = ~local & ~hit
        on_gpu = local & (pos[v] < cut[k])
        acc[0, i, k] = np.count_nonzero(local & ~on_gpu)
        acc[1, i, k] = np.count_nonzero(on_gpu)
        acc[2, i, k] = np.count_nonzero(hit)
        acc[3, i, k] = np.count_nonzero(miss)
        served[i] += np.bincount(owner[miss], minlength=K)
    return [BatchCost(acc[0, i], acc[1, i], acc[2, i], acc[3, i], served[i]) for i in range(steps)]
