from __future__ import annotations

import math
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestflow import oracles
from congestflow.approximator import build_approximator, apply_R
from congestflow.flow import (RetriesExhausted, almost_route, grad_potential, incidence, max_flow,
                              max_weight_spanning_tree, potential, route_on_tree, soft_max)
from congestflow.graph import excess, make_graph, st_demand

from conftest import complete_graph, random_graph


def test_soft_max_values():
    assert soft_max([0.0]) == pytest.approx(math.log(2))
    assert soft_max(np.zeros(5)) == pytest.approx(math.log(10))
    with pytest.raises(ValueError):
        soft_max([])


@given(st.lists(st.floats(-30, 30), min_size=1, max_size=20))
def test_soft_max_matches_naive_sum(ys):
    naive = math.log(sum(math.exp(y) + math.exp(-y) for y in ys))
    assert soft_max(ys) == pytest.approx(naive, rel=1e-12, abs=1e-12)


def test_soft_max_survives_large_inputs():
    assert soft_max([1000.0, -2000.0]) == pytest.approx(2000.0)


def test_potential_at_zero():
    g = random_graph(8, 6, 2)
    R = build_approximator(g, k=2, seed=0)
    phi, phi1, phi2, _ = potential(g, R, np.zeros(8), np.zeros(g.m), 3.0)
    assert phi1 == pytest.approx(math.log(2 * g.m))
    assert phi2 == pytest.approx(math.log(2 * R.rows))
    assert phi == pytest.approx(phi1 + phi2)


def test_single_edge_potential():
    g = make_graph(2, [(0, 1, 4)])
    R = build_approximator(g, k=1, seed=0)
    b = st_demand(2, 1, 0)
    phi, _, _, y = potential(g, R, b, np.array([1.0]), 2.0)
    # flow 1 on capacity 4 leaves no residual
    assert np.all(y == 0)
    assert phi == pytest.approx(math.log(math.exp(0.25) + math.exp(-0.25)) + math.log(2))


def _fd_check(g, R, b, f, alpha):
    edges = [(int(u), int(v), int(c)) for u, v, c, _ in g.edges()]
    trees = [(vt.parent.tolist(), vt.cap.tolist()) for vt in R.trees]
    gr = grad_potential(g, R, b, f, alpha)
    for e in range(g.m):
        up, dn = f.copy(), f.copy()
        up[e] += 1e-6 * g.cap[e]
        dn[e] -= 1e-6 * g.cap[e]
        diff = oracles.potential_hp(g.n, edges, trees, b, up, alpha) - \
            oracles.potential_hp(g.n, edges, trees, b, dn, alpha)
        fd = float(diff / (Decimal(float(up[e])) - Decimal(float(dn[e]))))
        assert abs(gr[e] - fd) <= 1e-4 * abs(fd) + 1e-15


def test_decimal_oracle_agrees_with_potential():
    g = random_graph(9, 9, 3)
    R = build_approximator(g, k=2, seed=1)
    rng = np.random.default_rng(0)
    b = rng.normal(size=9)
    b -= b.mean()
    f = rng.normal(size=g.m)
    edges = [(int(u), int(v), int(c)) for u, v, c, _ in g.edges()]
    trees = [(vt.parent.tolist(), vt.cap.tolist()) for vt in R.trees]
    hp = float(oracles.potential_hp(9, edges, trees, b, f, 2.5))
    assert potential(g, R, b, f, 2.5)[0] == pytest.approx(hp, rel=1e-12)


@settings(max_examples=15)
@given(st.integers(0, 10**6), st.integers(3, 10))
def test_gradient_matches_finite_differences(seed, n):
    g = random_graph(n, n, seed)
    R = build_approximator(g, k=2, seed=seed)
    rng = np.random.default_rng(seed)
    b = rng.normal(size=n)
    b -= b.mean()
    f = rng.normal(size=g.m) * g.cap * 0.3
    _fd_check(g, R, b, f, 1.5)


def test_zero_gradient_on_balanced_zero_state():
    g = complete_graph(4)
    R = build_approximator(g, k=1, seed=0)
    assert np.allclose(grad_potential(g, R, np.zeros(4), np.zeros(g.m), 2.0), 0.0)


def test_gradient_sign_single_edge():
    g = make_graph(2, [(0, 1, 1)])
    R = build_approximator(g, k=1, seed=0)
    # demand wants one unit into node 1; pushing flow along the edge lowers phi
    gr = grad_potential(g, R, st_demand(2, 1, 0), np.zeros(1), 2.0)
    assert gr[0] < 0


def test_almost_route_zero_demand():
    g = random_graph(6, 3, 1)
    R = build_approximator(g, k=1, seed=0)
    f, info = almost_route(g, R, np.zeros(6), 0.1, 2.0)
    assert np.all(f == 0) and info.iterations == 0


def test_almost_route_two_nodes():
    g = make_graph(2, [(0, 1, 5)])
    R = build_approximator(g, k=1, seed=0)
    f, _ = almost_route(g, R, st_demand(2, 1, 0), 0.1, 2.0)
    assert abs(f[0] - 1.0) <= 0.1


def test_potential_never_rises():
    g = random_graph(12, 12, 4)
    R = build_approximator(g, k=2, seed=1)
    steps = []
    almost_route(g, R, st_demand(12, 11, 0), 0.2, 4.0, monitor=lambda a, b: steps.append((a, b)))
    assert steps and all(after <= before * (1 + 1e-9) for before, after in steps)


def test_almost_route_reduces_residual():
    g = random_graph(16, 20, 8)
    R = build_approximator(g, k=3, seed=2)
    b = st_demand(16, 15, 0)
    f, info = almost_route(g, R, b, 0.5, 4.0)
    before = np.max(np.abs(apply_R(R, b)))
    after = np.max(np.abs(apply_R(R, b - incidence(g) @ f)))
    assert not info.stalled and after < before


def test_route_on_star():
    g = make_graph(4, [(0, 1, 1), (0, 2, 1), (0, 3, 1)])
    parent, pedge, order = max_weight_spanning_tree(g, 0)
    b = np.array([-3.0, 1.0, 1.0, 1.0])
    assert route_on_tree(g, parent, pedge, order, b).tolist() == [1.0, 1.0, 1.0]


@given(st.integers(0, 10**6), st.integers(2, 30))
def test_tree_routing_meets_demand(seed, n):
    g = random_graph(n, n, seed)
    parent, pedge, order = max_weight_spanning_tree(g, 0)
    rng = np.random.default_rng(seed)
    b = rng.integers(-5, 6, size=n).astype(float)
    b[0] -= b.sum()
    f = route_on_tree(g, parent, pedge, order, b)
    assert np.allclose(excess(g, f), b)
    sums = oracles.subtree_sums(n, parent.tolist(), b.tolist())
    for v in range(1, n):
        assert abs(f[pedge[v]]) == pytest.approx(abs(sums[v]))


def test_max_weight_tree_prefers_large_capacities():
    g = make_graph(3, [(0, 1, 1), (1, 2, 5), (0, 2, 5)])
    parent, pedge, _ = max_weight_spanning_tree(g, 0)
    assert sorted(pedge[1:].tolist()) == [1, 2]


def test_two_node_max_flow():
    g = make_graph(2, [(0, 1, 7)], 0, 1)
    res = max_flow(g, 0, 1, eps=0.1, seed=0)
    assert res.value >= 7 / 1.1 and res.congestion == 1.0


def test_unit_k4_max_flow():
    g = complete_graph(4)
    res = max_flow(g, 0, 3, eps=0.1, seed=3)
    assert 3 / 1.1 <= res.value <= 3 * (1 + 1e-9)
    assert np.allclose(excess(g, res.flow), st_demand(4, 3, 0, res.value))


@settings(max_examples=10)
@given(st.integers(0, 10**6), st.integers(3, 16))
def test_max_flow_is_feasible_and_close(seed, n):
    g = random_graph(n, n, seed)
    res = max_flow(g, 0, n - 1, eps=0.2, seed=seed)
    exact, _ = oracles.exact_max_flow(g, 0, n - 1)
    assert res.congestion == 1.0
    assert np.all(np.abs(res.flow) <= g.cap)
    assert exact / 1.5 <= res.value <= exact * (1 + 1e-9)


def test_input_errors():
    g = complete_graph(3)
    with pytest.raises(ValueError):
        max_flow(g, 1, 1)
    with pytest.raises(ValueError):
        max_flow(g, 0, 1, eps=1.5)


def test_retries_exhausted_when_no_descent():
    g = random_graph(12, 14, 3)
    with pytest.raises(RetriesExhausted):
        max_flow(g, 0, 11, eps=0.1, seed=0, max_iters=0)
