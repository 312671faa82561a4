from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestflow import oracles
from congestflow.approximator import (ApproxParams, CongestionApproximator, VirtualTree,
                                      _subtree_matrix, apply_R, apply_Rt, build_approximator,
                                      build_distribution_level, default_alpha, default_beta,
                                      default_k, default_stop_threshold, sample_virtual_tree)
from congestflow.cluster import singleton_cluster_graph
from congestflow.congest import RoundLedger
from congestflow.graph import cut_capacity, make_graph, st_demand

from conftest import complete_graph, cycle_graph, grid_graph, random_graph


def _approx(trees, n, alpha=4.0):
    mat, rt, rn, rc = _subtree_matrix(trees, n)
    return CongestionApproximator(n, trees, alpha, mat, rt, rn, rc, 1)


def _vt(parent, cap, root=0):
    return VirtualTree(len(parent), root, np.asarray(parent), np.asarray(cap, dtype=float), [])


def test_defaults():
    assert default_k(2) == 1 and default_k(1000) == 10
    assert default_alpha(1024) == 40
    assert default_beta(2) == 2 and default_beta(10**4) >= 2
    assert default_stop_threshold(4) == 32
    p = ApproxParams(k=3).resolved(100)
    assert p.k == 3 and p.alpha == default_alpha(100)


def test_tree_input_gives_the_tree_back():
    g = random_graph(15, 0, 3)
    vt = sample_virtual_tree(g, np.random.default_rng(0))
    got = {(min(x, int(vt.parent[x])), max(x, int(vt.parent[x]))): vt.cap[x] for x in vt.rows}
    expect = {(a, b): float(c) for a, b, c, _ in g.edges()}
    assert set(got) == set(expect)
    assert all(got[e] >= expect[e] for e in got)


def test_small_graph_is_handled_locally():
    g = random_graph(20, 20, 1)
    vt = sample_virtual_tree(g, np.random.default_rng(1))
    assert vt.rows.size == 19 and vt.order()[0] == vt.root
    assert all(rec.local for rec in vt.levels)


def test_single_tree_on_tree_input_has_n_minus_1_rows():
    g = random_graph(12, 0, 9)
    R = build_approximator(g, k=1, seed=0)
    assert R.rows == 11


def test_default_k_is_used():
    g = cycle_graph(9)
    R = build_approximator(g, seed=0)
    assert len(R.trees) == default_k(9) and R.rows == 8 * default_k(9)
    with pytest.raises(ValueError):
        build_approximator(g, k=0)


def _check_cut_domination(g, R):
    for vt in R.trees:
        for x in vt.rows.tolist():
            assert cut_capacity(g, vt.subtree(x)) <= vt.cap[x] + 1e-9


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.integers(2, 24))
def test_rows_dominate_their_cuts(seed, n):
    g = random_graph(n, n, seed)
    _check_cut_domination(g, build_approximator(g, k=2, seed=seed))


def test_cut_domination_on_structured_graphs():
    for g in (grid_graph(4, 5), complete_graph(7, 3), cycle_graph(16, 2)):
        _check_cut_domination(g, build_approximator(g, k=2, seed=4))


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.integers(3, 20))
def test_approximator_never_overestimates(seed, n):
    g = random_graph(n, n, seed)
    R = build_approximator(g, k=2, seed=seed)
    rng = np.random.default_rng(seed)
    s, t = (int(x) for x in rng.choice(n, 2, replace=False))
    opt = oracles.st_opt_congestion(g, s, t)
    rb = float(np.max(np.abs(apply_R(R, st_demand(n, s, t)))))
    assert rb <= opt * (1 + 1e-9)


def test_apply_r_path():
    R = _approx([_vt([-1, 0, 1], [0, 2, 2])], 3)
    assert np.all(apply_R(R, np.zeros(3)) == 0)
    assert np.abs(apply_R(R, [1.0, 0.0, -1.0])).tolist() == [0.5, 0.5]


@given(st.integers(0, 10**6), st.integers(2, 30))
def test_apply_r_matches_subtree_sums(seed, n):
    rng = np.random.default_rng(seed)
    parent = [-1] + [int(rng.integers(0, x)) for x in range(1, n)]
    cap = rng.integers(1, 9, size=n).astype(float)
    R = _approx([_vt(parent, cap)], n)
    b = rng.normal(size=n)
    sums = oracles.subtree_sums(n, parent, b.tolist())
    expect = [sums[x] / cap[x] for x in range(1, n)]
    assert apply_R(R, b) == pytest.approx(expect, rel=1e-12, abs=1e-12)


@given(st.integers(0, 10**6), st.integers(2, 30))
def test_adjoint_matches_root_paths(seed, n):
    rng = np.random.default_rng(seed)
    parent = [-1] + [int(rng.integers(0, x)) for x in range(1, n)]
    cap = rng.integers(1, 9, size=n).astype(float)
    R = _approx([_vt(parent, cap)], n)
    p = rng.normal(size=n - 1)
    # a price p on the row of node x counts p / cap(x) at every node below x
    vals = [0.0] + [p[x - 1] / cap[x] for x in range(1, n)]
    expect = oracles.root_path_sums(n, parent, vals)
    assert apply_Rt(R, p) == pytest.approx(expect, rel=1e-12, abs=1e-12)
    b = rng.normal(size=n)
    assert float(p @ apply_R(R, b)) == pytest.approx(float(apply_Rt(R, p) @ b), rel=1e-9)


def test_unit_capacity_price_reaches_the_subtree():
    R = _approx([_vt([-1, 0, 1], [0, 1, 1])], 3)
    assert apply_Rt(R, [1.0, 0.0]).tolist() == [0.0, 1.0, 1.0]


def test_application_charges_rounds():
    ledger = RoundLedger()
    R = build_approximator(cycle_graph(6), k=1, seed=0)
    apply_R(R, np.zeros(6), ledger)
    apply_Rt(R, np.zeros(R.rows), ledger)
    assert ledger.rounds_elapsed == 2 * R.apply_rounds


def _mg(g):
    return singleton_cluster_graph(g).multigraph()


def test_distribution_on_tree_is_one_member():
    dist = build_distribution_level(_mg(random_graph(10, 0, 2)), 2, np.random.default_rng(0))
    assert len(dist.members) == 1 and dist.weights.tolist() == [1.0] and dist.covered


def test_triangle_distribution_uses_few_trees():
    dist = build_distribution_level(_mg(complete_graph(3)), 1, np.random.default_rng(0), s_cap=50)
    assert len(dist.members) <= 3
    assert math.isclose(dist.weights.sum(), 1.0)


def test_iteration_cap_is_respected():
    mg = _mg(random_graph(30, 60, 6))
    with pytest.warns(RuntimeWarning):
        dist = build_distribution_level(mg, 3, np.random.default_rng(2), s_cap=2)
    assert dist.iterations <= 2 and len(dist.members) <= 2
    with pytest.raises(ValueError):
        build_distribution_level(mg, 0, np.random.default_rng(2))


def test_same_seed_same_approximator():
    g = random_graph(25, 30, 11)
    a = build_approximator(g, k=2, seed=5)
    b = build_approximator(g, k=2, seed=5)
    assert (a.matrix != b.matrix).nnz == 0


def test_single_node_graph():
    g = make_graph(1, [])
    R = build_approximator(g, k=1)
    assert R.rows == 0
