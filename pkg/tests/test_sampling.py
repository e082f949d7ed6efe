import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from vipkit import _hash
from vipkit.errors import ParameterError, SamplingError
from vipkit.graph import Graph, VertexRoles, grid_graph, path_graph, preferential_attachment, star_graph
from vipkit.partition import PartitionMap
from vipkit.sampling import (SeedSpec, epoch_expansion, epoch_minibatches, expand, expand_many,
                             sample_neighbors, trace_rows)
from oracles import walk_reach_exact

DRAWS = 100_000


def first_hop_freq(g, v, f, draws=DRAWS, seed=0):
    streams = _hash.mix(np.uint64(seed), np.arange(draws, dtype=np.uint64))
    ex = expand_many(g, [[v]] * draws, (f,), streams)
    hop1 = ex.vertex[ex.hop == 1]
    return np.bincount(hop1, minlength=g.num_vertices) / draws, ex


def one_part(n, train=None):
    roles = VertexRoles.all_train(n) if train is None else VertexRoles(np.where(np.isin(np.arange(n), train), 0, 3))
    return roles, PartitionMap(np.zeros(n, dtype=np.int64), 1)


def test_small_degree_returns_all_neighbours():
    g = star_graph(4)  # centre has degree 3
    assert sample_neighbors(g, 0, 5, np.uint64(1)).tolist() == [1, 2, 3]
    g = Graph.from_edges([0], [1], 3, make_undirected=False)
    assert sample_neighbors(g, 2, 5, np.uint64(1)).size == 0
    assert sample_neighbors(g, 1, 1, np.uint64(1)).size == 0


def test_sample_size_and_membership():
    g = preferential_attachment(300, 4, seed=1)
    for v in range(0, 300, 17):
        for s in range(5):
            got = sample_neighbors(g, v, 3, np.uint64(s))
            assert got.size == min(3, g.out_degree[v])
            assert np.unique(got).size == got.size
            assert np.all(np.isin(got, g.neighbors(v)))


def test_degree_four_fanout_two_is_uniform():
    g = grid_graph(3, 3)
    centre = 4
    assert g.out_degree[centre] == 4
    freq, _ = first_hop_freq(g, centre, 2)
    sigma = np.sqrt(0.25 / DRAWS)
    for u in g.neighbors(centre):
        assert abs(freq[u] - 0.5) <= 3 * sigma


def test_star_centre_fanout_two():
    g = star_graph(5)
    freq, ex = first_hop_freq(g, 0, 2, seed=9)
    sizes = np.bincount(ex.batch[ex.hop == 1], minlength=DRAWS)
    assert np.all(sizes == 2)
    sigma = np.sqrt(0.25 / DRAWS)
    assert np.all(np.abs(freq[1:] - 0.5) <= 3 * sigma)


def test_pairs_are_uniform_subsets():
    # all 6 two-subsets of a degree-4 vertex should be equally likely
    g = star_graph(5)
    _, ex = first_hop_freq(g, 0, 2, seed=4)
    v = ex.vertex[ex.hop == 1].reshape(-1, 2)
    code = np.bincount((v[:, 0] - 1) * 4 + (v[:, 1] - 1), minlength=16)
    counts = code[code > 0]
    assert counts.size == 6
    p = 1 / 6
    assert np.all(np.abs(counts / DRAWS - p) <= 4 * np.sqrt(p * (1 - p) / DRAWS))


def test_path_abc_hand_enumeration():
    g = path_graph(3)
    n = 20_000
    streams = _hash.mix(np.uint64(3), np.arange(n, dtype=np.uint64))
    ex = expand_many(g, [[0]] * n, (1, 1), streams)
    assert np.all(ex.vertex[ex.hop == 1] == 1)
    h2 = ex.vertex[ex.hop == 2]
    assert h2.size == n and set(np.unique(h2).tolist()) == {0, 2}
    assert abs(np.mean(h2 == 2) - 0.5) <= 3 * np.sqrt(0.25 / n)
    ptr, verts = ex.all_vertices()
    for j in range(0, n, 997):
        assert {0, 1} <= set(verts[ptr[j]:ptr[j + 1]].tolist())


def test_expand_single_batch_api():
    g = path_graph(3)
    nb = expand(g, [0], (1, 1), np.uint64(5))
    assert nb.batch.tolist() == [0]
    assert nb.frontier(1).tolist() == [1]
    assert nb.num_hops == 2
    assert set(nb.all_vertices.tolist()) >= {0, 1}
    with pytest.raises(ParameterError):
        expand(g, [], (1,), np.uint64(0))
    with pytest.raises(ParameterError):
        expand(g, [0], (0,), np.uint64(0))


def test_expand_pads_dead_frontiers():
    g = Graph.from_edges([0], [1], 3, make_undirected=False)
    nb = expand(g, [0], (2, 2, 2), np.uint64(0))
    assert [f.tolist() for f in nb.frontiers] == [[0], [1], [], []]


@pytest.mark.parametrize("seed", range(4))
def test_full_fanout_is_exact_neighbourhood(seed):
    g = preferential_attachment(150, 2, seed=seed)
    rng = np.random.default_rng(seed)
    batch = rng.choice(150, 5, replace=False)
    fan = int(g.out_degree.max())
    nb = expand(g, batch, (fan, fan, fan), np.uint64(seed))
    want = set(batch.tolist())
    for h in range(1, 4):
        reach = walk_reach_exact(g, batch, h)
        assert set(nb.frontier(h).tolist()) == reach
        want |= reach
    assert set(nb.all_vertices.tolist()) == want


@settings(max_examples=60, deadline=None)
@given(st.integers(5, 40), st.integers(0, 2**32), st.lists(st.integers(1, 4), min_size=1, max_size=3),
       st.booleans())
def test_frontier_invariants(n, seed, fanouts, undirected):
    rng = np.random.default_rng(seed)
    m = 3 * n
    g = Graph.from_edges(rng.integers(0, n, m), rng.integers(0, n, m), n, make_undirected=undirected)
    batch = np.unique(rng.integers(0, n, 3))
    nb = expand(g, batch, fanouts, np.uint64(seed))
    for h, f in enumerate(fanouts, 1):
        prev, cur = nb.frontier(h - 1), nb.frontier(h)
        assert cur.size <= np.minimum(f, g.out_degree[prev]).sum()
        assert np.unique(cur).size == cur.size
        # every vertex has an in-edge from the previous frontier
        for u in cur:
            assert np.isin(g.in_neighbors(u), prev).any()
        # every sampler with neighbours reached at least one of them
        for v in prev:
            assert np.isin(g.neighbors(v), cur).sum() >= min(1, g.out_degree[v])
    union = np.unique(np.concatenate(nb.frontiers))
    assert np.array_equal(union, nb.all_vertices)


def test_expand_many_matches_individual_expansions():
    g = preferential_attachment(400, 3, seed=2)
    rng = np.random.default_rng(0)
    batches = [rng.choice(400, 4, replace=False) for _ in range(20)]
    streams = np.arange(20, dtype=np.uint64) * np.uint64(7919)
    ex = expand_many(g, batches, (4, 3), streams)
    for j in range(0, 20, 3):
        one = expand(g, batches[j], (4, 3), streams[j])
        many = ex.neighborhood(j)
        for h in range(3):
            assert np.array_equal(one.frontier(h), many.frontier(h))


def test_relabelling_with_key_ids_reproduces_samples():
    g = preferential_attachment(300, 4, seed=5)
    perm = np.random.default_rng(1).permutation(300)  # new id of old id
    inv = np.argsort(perm)
    h = g.relabel(perm)
    batch = np.array([3, 10, 77])
    a = expand(g, batch, (5, 3, 2), np.uint64(11))
    b = expand(h, perm[batch], (5, 3, 2), np.uint64(11), key_ids=inv)
    for k in range(4):
        assert np.array_equal(np.sort(inv[b.frontier(k)]), a.frontier(k))


def test_epoch_minibatch_chunking():
    roles, part = one_part(10)
    batches = epoch_minibatches(roles, part, 0, 4, 0, SeedSpec(1))
    assert [bt.size for bt in batches] == [4, 4, 2]
    assert np.array_equal(np.sort(np.concatenate(batches)), np.arange(10))
    for bt in batches:
        assert np.all(np.diff(bt) > 0)
    whole = epoch_minibatches(roles, part, 0, 25, 3, SeedSpec(1))
    assert len(whole) == 1 and whole[0].tolist() == list(range(10))


def test_epoch_minibatches_deterministic_and_epoch_dependent():
    roles, part = one_part(200, train=np.arange(0, 200, 2))
    a = epoch_minibatches(roles, part, 0, 7, 4, SeedSpec(9))
    b = epoch_minibatches(roles, part, 0, 7, 4, SeedSpec(9))
    c = epoch_minibatches(roles, part, 0, 7, 5, SeedSpec(9))
    d = epoch_minibatches(roles, part, 0, 7, 4, SeedSpec(9).for_simulation())
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert any(not np.array_equal(x, y) for x, y in zip(a, c))
    assert any(not np.array_equal(x, y) for x, y in zip(a, d))
    assert np.all(np.concatenate(a) % 2 == 0)


def test_epoch_shuffle_is_uniform_over_first_batch():
    roles, part = one_part(8)
    E = 20_000
    counts = np.zeros(8)
    for e in range(E):
        counts[epoch_minibatches(roles, part, 0, 2, e, SeedSpec(2))[0]] += 1
    p = 0.25
    assert np.all(np.abs(counts / E - p) <= 4 * np.sqrt(p * (1 - p) / E))


def test_epoch_minibatch_errors():
    roles, part = one_part(5)
    with pytest.raises(ParameterError):
        epoch_minibatches(roles, part, 0, 0, 0, SeedSpec())
    with pytest.raises(SamplingError):
        epoch_minibatches(VertexRoles(np.full(5, 3)), part, 0, 2, 0, SeedSpec())


def test_epoch_expansion_and_trace_rows():
    g = path_graph(6)
    roles = VertexRoles.all_train(6)
    part = PartitionMap(np.array([0, 0, 0, 1, 1, 1]), 2)
    ex, meta = epoch_expansion(g, roles, part, (1, 1), 2, 0, SeedSpec(3))
    assert meta.tolist() == [[0, 0], [0, 1], [1, 0], [1, 1]]
    rows = list(trace_rows(0, ex, meta))
    assert all(r[0] == 0 for r in rows)
    hop0 = sorted(r[3] for r in rows if r[4] == 0)
    assert hop0 == list(range(6))
