from __future__ import annotations

import json
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from congestflow import oracles
from congestflow.graph import (DuplicateEdgeWarning, GraphError, check_demand, congestion,
                               cut_capacity, dump_dimacs, dump_json, excess, load_graph,
                               make_graph, st_demand)

from conftest import complete_graph, random_graph


def test_zero_flow_has_zero_excess():
    g = complete_graph(4)
    assert np.array_equal(excess(g, np.zeros(g.m)), np.zeros(4))


def test_path_excess_is_conserved():
    g = make_graph(3, [(0, 1, 1), (1, 2, 1)])
    assert excess(g, [1.0, 1.0]).tolist() == [-1.0, 0.0, 1.0]


def test_k4_excess_matches_accumulation():
    # frozen from a per-edge accumulation loop over the same flow
    g = complete_graph(4)
    f = [-0.286, 0.359, 2.545, -0.206, 0.047, 0.524]
    assert np.allclose(excess(g, f), [-2.618, -0.127, -0.371, 3.116], atol=1e-12)


def test_congestion_definitions():
    g = make_graph(2, [(0, 1, 4)])
    assert congestion(g, [0.0]) == 0.0
    assert congestion(g, [2.0]) == 0.5


def test_congestion_matches_scan():
    g = random_graph(9, 6, 5)
    f = [-3, 8, 7, -6, 1, 9, 5, 10, 8, -8, 9, -10, 5, -2]
    assert congestion(g, f) == 5.0


def test_cut_capacity_cases(triangle):
    assert cut_capacity(triangle, [0]) == 2
    g = random_graph(9, 6, 5)
    side = {0, 2, 4, 6}
    assert cut_capacity(g, side) == cut_capacity(g, set(range(9)) - side) == 98


@given(st.integers(0, 10**6), st.integers(3, 14))
def test_cut_capacity_matches_enumeration(seed, n):
    g = random_graph(n, n, seed)
    rnd = np.random.default_rng(seed)
    side = [x for x in range(n) if rnd.random() < 0.5] or [0]
    if len(side) == n:
        side = side[1:]
    edges = [(a, b, c) for a, b, c, _ in g.edges()]
    assert cut_capacity(g, side) == oracles.cut_of(n, edges, side)


@given(st.integers(0, 10**6), st.integers(3, 12))
def test_excess_sums_to_zero(seed, n):
    g = random_graph(n, n, seed)
    f = np.random.default_rng(seed).normal(size=g.m)
    assert abs(excess(g, f).sum()) < 1e-9


def test_dimacs_header_and_arcs():
    text = "c sample\np max 4 5\nn 1 s\nn 4 t\na 1 2 3\na 2 3 1\na 3 4 2\na 1 3 5\na 2 4 1\n"
    g = load_graph(text, "dimacs")
    assert (g.n, g.m, g.source, g.sink) == (4, 5, 0, 3)


def test_duplicate_edges_merge_with_warning():
    with pytest.warns(DuplicateEdgeWarning):
        g = load_graph("p max 2 2\na 1 2 3\na 2 1 4\n", "dimacs")
    assert g.m == 1 and int(g.cap[0]) == 7


@pytest.mark.parametrize("text", [
    "p max 2 1\na 1 2 0\n",
    "p max 2 1\na 1 1 3\n",
    "p max 2 1\na 1 3 3\n",
    "a 1 2 3\n",
    "p max 2 2\na 1 2 3\n",
    "p max 2 1\nx 1 2 3\n",
])
def test_bad_dimacs_rejected(text):
    with pytest.raises(GraphError):
        load_graph(text, "dimacs")


def test_disconnected_graph_rejected():
    with pytest.raises(GraphError):
        make_graph(4, [(0, 1, 1), (2, 3, 1)])


def test_json_round_trip():
    g = random_graph(10, 8, 3, s=0, t=9)
    for fmt, dump in (("json", dump_json), ("dimacs", dump_dimacs)):
        h = load_graph(dump(g), fmt)
        assert h.fingerprint() == g.fingerprint()
        assert (h.source, h.sink) == (0, 9)
    doc = json.loads(dump_json(g))
    assert doc["nodes"] == 10


def test_json_errors():
    with pytest.raises(GraphError):
        load_graph("{not json", "json")
    with pytest.raises(GraphError):
        load_graph('{"nodes": 2}', "json")


def test_demand_checks():
    assert check_demand(st_demand(3, 0, 2), 3).tolist() == [1.0, 0.0, -1.0]
    with pytest.raises(ValueError):
        check_demand([1.0, 0.0], 2)
    with pytest.raises(ValueError):
        check_demand([1.0, -1.0], 3)


def test_capacity_bound_enforced():
    with pytest.raises(GraphError):
        make_graph(2, [(0, 1, 17)])  # default bound n^4 = 16
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        make_graph(2, [(0, 1, 16)])
