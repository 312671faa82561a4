from __future__ import annotations

import random

import pytest
from hypothesis import HealthCheck, settings

from congestflow.graph import make_graph

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_edges(n: int, extra: int, seed: int, max_cap: int = 20) -> list[tuple[int, int, int]]:
    """Random spanning tree plus ``extra`` distinct non-tree edges (plain Python RNG)."""
    rnd = random.Random(seed)
    edges = {}
    for x in range(1, n):
        y = rnd.randrange(x)
        edges[(y, x)] = rnd.randint(1, max_cap)
    budget = min(extra, n * (n - 1) // 2 - (n - 1))
    while budget > 0:
        a, b = rnd.sample(range(n), 2)
        key = (min(a, b), max(a, b))
        if key not in edges:
            edges[key] = rnd.randint(1, max_cap)
            budget -= 1
    return [(a, b, c) for (a, b), c in sorted(edges.items())]


def random_graph(n: int, extra: int, seed: int, max_cap: int = 20, s=None, t=None):
    return make_graph(n, random_edges(n, extra, seed, max_cap), s, t, cap_bound=max(n**4, max_cap))


def path_graph(n: int, cap: int = 1):
    return make_graph(n, [(i, i + 1, cap) for i in range(n - 1)])


def cycle_graph(n: int, cap: int = 1):
    return make_graph(n, [(i, (i + 1) % n, cap) for i in range(n)])


def grid_graph(r: int, c: int, cap: int = 1):
    edges = []
    for i in range(r):
        for j in range(c):
            x = i * c + j
            if j + 1 < c:
                edges.append((x, x + 1, cap))
            if i + 1 < r:
                edges.append((x, x + c, cap))
    return make_graph(r * c, edges)


def complete_graph(n: int, cap: int = 1):
    return make_graph(n, [(a, b, cap) for a in range(n) for b in range(a + 1, n)])


def clustered_graph(n: int, seed: int, keep: float = 0.6):
    """Random graph plus a labeling whose classes are connected (subtrees of a spanning tree)."""
    rnd = random.Random(seed)
    parent = [-1] + [rnd.randrange(x) for x in range(1, n)]
    edges = {(parent[x], x): rnd.randint(1, 9) for x in range(1, n)}
    for _ in range(n):
        a, b = rnd.sample(range(n), 2)
        edges.setdefault((min(a, b), max(a, b)), rnd.randint(1, 9))
    top = list(range(n))
    for x in range(1, n):
        if rnd.random() < keep:
            top[x] = top[parent[x]]
    ids = {t: i for i, t in enumerate(sorted(set(top)))}
    g = make_graph(n, [(a, b, c) for (a, b), c in edges.items()], cap_bound=10**9)
    return g, [ids[t] for t in top]


@pytest.fixture
def triangle():
    return complete_graph(3)
