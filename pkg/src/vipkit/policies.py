"""Per-partition remote-vertex rankings and static caches built from them.

Every ranking orders *all* remote vertices of a partition by decreasing score
with ties broken by ascending id, so a cache of any capacity is a prefix.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError, ShapeError
from .graph import Graph, VertexRoles, _frozen
from .partition import PartitionMap
from .vip import TransitionModel, VipScores

POLICIES = ("deg", "1hop", "wpr", "paths", "sim", "vip", "oracle")


@dataclass(frozen=True, eq=False)
class Ranking:
    partition: int
    order: np.ndarray
    scores: np.ndarray
    policy: str = ""
    effective_alpha: float | None = None

    def __len__(self):
        return self.order.size

    def prefix(self, c: int) -> np.ndarray:
        return self.order[:c]


def _order_remote(part: PartitionMap, k: int, *keys) -> np.ndarray:
    """Remote vertices of ``k`` sorted by the given keys (descending), then by id."""
    remote = np.flatnonzero(part.part_of != k)
    cols = [remote] + [-np.asarray(kk, dtype=np.float64)[remote] for kk in reversed(keys)]
    return _frozen(remote[np.lexsort(cols)])


def rank_by_scores(scores, part: PartitionMap, k: int, policy: str = "") -> Ranking:
    """Generic ranking from a length-n score vector."""
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != part.part_of.shape:
        raise ShapeError(f"score vector must have length {part.part_of.size}, got {scores.shape}")
    return Ranking(k, _order_remote(part, k, scores), _frozen(scores, np.float64), policy)


def expansion_reach(g: Graph, sources, L: int) -> np.ndarray:
    """Mask of vertices reachable from ``sources`` by at most ``L`` sampling steps."""
    seen = np.zeros(g.num_vertices, dtype=bool)
    seen[sources] = True
    frontier = np.asarray(sources, dtype=np.int64)
    for _ in range(L):
        if frontier.size == 0:
            break
        deg = g.out_degree[frontier]
        idx = np.repeat(g.forward_offsets[frontier] - (np.cumsum(deg) - deg), deg) + np.arange(deg.sum())
        nxt = np.unique(g.forward_targets[idx])
        frontier = nxt[~seen[nxt]]
        seen[frontier] = True
    return seen


def rank_degree(g: Graph, roles: VertexRoles, part: PartitionMap, k: int, L: int) -> Ranking:
    """Reachable remotes by decreasing out-degree, then unreachable remotes (score 0)."""
    reach = expansion_reach(g, part.train_members(roles, k), L)
    deg = g.out_degree.astype(np.float64)
    scores = np.where(reach, deg, 0.0)
    order = _order_remote(part, k, reach, deg * reach)
    return Ranking(k, order, _frozen(scores, np.float64), "deg")


def halo(g: Graph, part: PartitionMap, k: int) -> np.ndarray:
    """Remote vertices that are out-neighbours of some partition-``k`` vertex."""
    local = part.members[k]
    reach = expansion_reach(g, local, 1)
    return np.flatnonzero(reach & (part.part_of != k))


def rank_halo_1hop(g: Graph, part: PartitionMap, k: int) -> Ranking:
    """Halo first (ascending id), then the remaining remotes with score 0.

    ``effective_alpha`` is the replication factor that caches exactly the halo.
    """
    scores = np.zeros(g.num_vertices)
    scores[halo(g, part, k)] = 1.0
    r = rank_by_scores(scores, part, k, "1hop")
    eff = float(scores.sum()) * part.K / g.num_vertices
    return Ranking(k, r.order, r.scores, "1hop", eff)


def wpr_scores(g: Graph, roles: VertexRoles, part: PartitionMap, k: int, iters: int = 5,
               damping: float = 0.85, tm: TransitionModel | None = None) -> np.ndarray:
    """Weighted reverse-PageRank restarted at partition ``k``'s train vertices.

    Mass flows along sampling direction: ``v`` passes ``d * r(v)`` to its
    out-neighbours in proportion to ``w_1(v)`` (row-normalised, hence 1/deg
    under uniform fanout). Mass of sinks returns to the restart vector.
    """
    if iters < 1:
        raise ParameterError("iters must be >= 1")
    train = part.train_members(roles, k)
    e = np.zeros(g.num_vertices)
    if train.size:
        e[train] = 1.0 / train.size
    w = (tm or TransitionModel((1,))).pick_prob(g, 1)
    row_sum = w * g.out_degree
    with np.errstate(divide="ignore", invalid="ignore"):
        share = np.where(row_sum > 0, w / row_sum, 0.0)
    sinks = g.out_degree == 0
    src = g.sources()
    r = e.copy()
    for _ in range(iters):
        flow = np.bincount(g.forward_targets, weights=(r * share)[src], minlength=g.num_vertices)
        r = (1.0 - damping) * e + damping * (flow + r[sinks].sum() * e)
    return r


def rank_wpr(g, roles, part, k, iters=5, damping=0.85, tm=None) -> Ranking:
    return rank_by_scores(wpr_scores(g, roles, part, k, iters, damping, tm), part, k, "wpr")


def numpaths_scores(g: Graph, roles: VertexRoles, part: PartitionMap, k: int, L: int) -> np.ndarray:
    """Number of walks of length 1..L from partition ``k``'s train vertices to each vertex."""
    c = np.zeros(g.num_vertices)
    c[part.train_members(roles, k)] = 1.0
    src = g.sources()
    score = np.zeros(g.num_vertices)
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(L):
            c = np.bincount(g.forward_targets, weights=c[src], minlength=g.num_vertices)
            score += c
    return score


def rank_numpaths(g, roles, part, k, L) -> Ranking:
    return rank_by_scores(numpaths_scores(g, roles, part, k, L), part, k, "paths")


def rank_sim(freq, part, k) -> Ranking:
    return rank_by_scores(freq, part, k, "sim")


def rank_vip(scores: VipScores, part, k=None) -> Ranking:
    k = scores.partition if k is None else k
    return rank_by_scores(scores.total, part, k, "vip")


def rank_oracle(access_counts, part, k) -> Ranking:
    return rank_by_scores(access_counts, part, k, "oracle")


@dataclass(frozen=True, eq=False)
class CachePlan:
    """Per-partition static caches of remote vertices."""

    alpha: float
    capacity: int
    cached: tuple
    num_vertices: int
    policy: str = ""

    def __post_init__(self):
        masks = np.zeros((len(self.cached), self.num_vertices), dtype=bool)
        for k, c in enumerate(self.cached):
            masks[k, c] = True
        masks.setflags(write=False)
        object.__setattr__(self, "_masks", masks)
        object.__setattr__(self, "_sets", tuple(frozenset(c.tolist()) for c in self.cached))

    @property
    def K(self) -> int:
        return len(self.cached)

    @property
    def masks(self) -> np.ndarray:
        """``(K, n)`` boolean membership table."""
        return self._masks

    def contains(self, k: int, v) -> bool:
        return int(v) in self._sets[k]

    def write(self, directory, manifest_extra: dict | None = None) -> None:
        from pathlib import Path

        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        for k, c in enumerate(self.cached):
            (d / f"cache_{k}.txt").write_text("".join(f"{int(v)}\n" for v in c))
        manifest = {"policy": self.policy, "alpha": self.alpha, "K": self.K,
                    "capacity": self.capacity, "num_vertices": self.num_vertices}
        manifest.update(manifest_extra or {})
        (d / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def read_cache_plan(directory) -> CachePlan:
    from pathlib import Path

    d = Path(directory)
    m = json.loads((d / "manifest.json").read_text())
    cached = tuple(_frozen(np.loadtxt(d / f"cache_{k}.txt", dtype=np.int64, ndmin=1))
                   for k in range(m["K"]))
    return CachePlan(m["alpha"], m["capacity"], cached, m["num_vertices"], m.get("policy", ""))


def cache_capacity(alpha: float, n: int, K: int) -> int:
    # small epsilon guards against 0.16*100/4 landing just below an integer
    return int(np.floor(alpha * n / K + 1e-9))


def build_cache(rankings, alpha: float, num_vertices: int | None = None) -> CachePlan:
    """Cache the top ``floor(alpha n / K)`` remote vertices of every partition's ranking."""
    if alpha < 0:
        raise ParameterError("alpha must be >= 0")
    rankings = list(rankings)
    K = len(rankings)
    n = rankings[0].scores.size if num_vertices is None else num_vertices
    cap = cache_capacity(alpha, n, K)
    cached = tuple(_frozen(r.order[:cap]) for r in rankings)
    return CachePlan(float(alpha), cap, cached, n, rankings[0].policy)
