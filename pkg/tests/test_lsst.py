from __future__ import annotations

import math
from collections import deque

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from congestflow import oracles
from congestflow.approximator import default_alpha
from congestflow.cluster import Multigraph, singleton_cluster_graph
from congestflow.lsst import (Clustering, average_stretch, default_z, lca_pairs, low_stretch_tree,
                              make_tree, over_split_classes, partition, split_graph)

from conftest import cycle_graph, path_graph, random_graph


def _mg(g):
    return singleton_cluster_graph(g).multigraph()


def _edges(mg):
    return [(a, b, c) for a, b, c in zip(mg.a.tolist(), mg.b.tolist(), mg.cap.tolist())]


def test_large_radius_gives_one_cluster():
    nbrs = [[1], [0, 2], [1, 3], [2, 4], [3, 5], [4, 6], [5, 7], [6]]
    cl = split_graph(nbrs, rho=100, rng=np.random.default_rng(1))
    assert cl.count == 1 and set(cl.labels.tolist()) == {0}


@given(st.integers(0, 10**6), st.integers(2, 40), st.integers(1, 6))
def test_cluster_radius_bounded(seed, n, rho):
    g = random_graph(n, n // 2, seed)
    nbrs = _mg(g).neighbor_lists()
    cl = split_graph(nbrs, rho, np.random.default_rng(seed))
    # breadth-first search inside each cluster from its source
    for c, s in enumerate(cl.sources):
        dist = {s: 0}
        queue = deque([s])
        while queue:
            x = queue.popleft()
            for y in nbrs[x]:
                if cl.labels[y] == c and y not in dist:
                    dist[y] = dist[x] + 1
                    queue.append(y)
        members = np.nonzero(cl.labels == c)[0].tolist()
        assert set(members) == set(dist)
        assert max(dist.values()) <= rho
    assert np.all(cl.radius() <= rho)


def test_single_class_large_radius_accepted_first_try():
    g = path_graph(6)
    mg = _mg(g)
    nbrs = mg.neighbor_lists()
    edges = [(a, b, 1) for a, b, _ in _edges(mg)]
    res = partition(nbrs, edges, rho=50, rng=np.random.default_rng(0))
    assert res.accepted and res.restarts == 0
    lab = res.clustering.labels
    assert all(lab[a] == lab[b] for a, b, _ in edges)


def test_unit_class_acceptance_is_decided_by_the_cut():
    cl = Clustering(np.array([0, 1]), [0, 1], np.array([-1, -1]), np.array([0, 0]))
    whole = Clustering(np.array([0, 0]), [0], np.array([-1, 0]), np.array([0, 1]))
    edges = [(0, 1, 1)]
    # threshold c_split * 1 * log N / rho = 16 / rho: one cut edge is too many once rho > 16
    assert over_split_classes(cl, edges, rho=32, N=2) == [1]
    assert over_split_classes(whole, edges, rho=32, N=2) == []


def test_tiny_radius_on_clique_restarts():
    n = 12
    nbrs = [[y for y in range(n) if y != x] for x in range(n)]
    edges = [(a, b, 1) for a in range(n) for b in range(a + 1, n)]
    # many sources per step, so balls of radius 1 collide and cut clique edges
    res = partition(nbrs, edges, rho=1, rng=np.random.default_rng(3), c_split=0.05, restart_cap=5,
                    c_source=12.0)
    assert res.restarts >= 1
    assert res.accepted or res.restarts == 5


def test_tree_input_returns_the_tree():
    g = random_graph(20, 0, 4)
    mg = _mg(g)
    t = low_stretch_tree(mg, rng=np.random.default_rng(0))
    assert sorted(t.edges.tolist()) == list(range(mg.M))
    assert average_stretch(mg, t) == 1.0


@pytest.mark.parametrize("n", [3, 5, 8, 13])
def test_cycle_stretch_exact(n):
    mg = _mg(cycle_graph(n))
    for seed in range(5):
        t = low_stretch_tree(mg, rng=np.random.default_rng(seed))
        assert average_stretch(mg, t) == pytest.approx((2 * n - 2) / n, abs=1e-12)


def test_triangle_path_tree_stretch():
    mg = _mg(cycle_graph(3))
    t = make_tree(mg, [0, 1])
    assert average_stretch(mg, t, weighted=False) == pytest.approx(4 / 3)


@given(st.integers(0, 10**6), st.integers(2, 40))
def test_stretch_matches_path_oracle(seed, n):
    g = random_graph(n, n, seed)
    mg = _mg(g)
    rng = np.random.default_rng(seed)
    lengths = rng.integers(1, 10, size=mg.M).astype(float)
    t = low_stretch_tree(mg, lengths, rng)
    assert len(t.edges) == n - 1
    brute = oracles.brute_stretch(n, _edges(mg), lengths.tolist(), t.edges.tolist())
    assert average_stretch(mg, t, lengths) == pytest.approx(brute, rel=1e-12)


@given(st.integers(0, 10**6), st.integers(8, 60))
def test_stretch_within_configured_bound(seed, n):
    g = random_graph(n, 2 * n, seed)
    mg = _mg(g)
    t = low_stretch_tree(mg, 1.0 / mg.cap, np.random.default_rng(seed), alpha_cfg=default_alpha(n))
    assert t.stretch <= 2 * default_alpha(n)


@given(st.integers(0, 10**6), st.integers(2, 50))
def test_lca_matches_root_paths(seed, n):
    g = random_graph(n, 0, seed)
    mg = _mg(g)
    t = make_tree(mg, range(mg.M), root=seed % n)
    rng = np.random.default_rng(seed)
    x = rng.integers(0, n, size=20)
    y = rng.integers(0, n, size=20)
    got = lca_pairs(t, x, y)
    for a, b, c in zip(x.tolist(), y.tolist(), got.tolist()):
        up = set()
        z = a
        while z >= 0:
            up.add(z)
            z = int(t.parent[z])
        z = b
        while z not in up:
            z = int(t.parent[z])
        assert z == c


def test_input_validation():
    mg = _mg(path_graph(4))
    with pytest.raises(ValueError):
        low_stretch_tree(mg, np.zeros(mg.M))
    with pytest.raises(ValueError):
        make_tree(mg, [0, 1])
    with pytest.raises(ValueError):
        split_graph([[1], [0]], rho=0.5, rng=np.random.default_rng(0))
    assert default_z(2) >= 4 and math.isfinite(default_z(10**6))


def test_single_node_tree():
    t = low_stretch_tree(Multigraph(1, [], [], [], []))
    assert t.N == 1 and t.edges.size == 0
