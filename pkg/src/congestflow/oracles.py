"""Brute-force reference computations.

Everything here is plain Python on lists and dicts, deliberately slow and
independent of the numpy/scipy code paths it checks.
"""

from __future__ import annotations

import hashlib
from collections import deque
from dataclasses import dataclass
from decimal import Decimal, localcontext
from itertools import combinations

MAX_FLOW_LIMIT = 256
CUT_ENUM_LIMIT = 12


@dataclass
class OracleReport:
    value: object
    method: str
    fingerprint: str


def _edges(g) -> list[tuple[int, int, int]]:
    return [(int(u), int(v), int(c)) for u, v, c in zip(g.u.tolist(), g.v.tolist(), g.cap.tolist())]


def fingerprint(n: int, edges) -> str:
    text = f"{n};" + ";".join(f"{u},{v},{c}" for u, v, c in sorted(edges))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def exact_max_flow(g, s: int, t: int) -> tuple[int, list[int]]:
    """Shortest augmenting paths on the two-arc expansion of every edge.

    Returns the integer value and an integral flow per edge (positive in the
    stored u -> v direction).
    """
    n = g.n
    if n > MAX_FLOW_LIMIT:
        raise ValueError(f"exact max flow oracle limited to n <= {MAX_FLOW_LIMIT}")
    if s == t:
        raise ValueError("source and sink must differ")
    edges = _edges(g)
    # arc k: edge k//2 forward (u->v) when k even, backward when odd; residual cap
    head: list[int] = []
    res: list[int] = []
    out: list[list[int]] = [[] for _ in range(n)]
    for u, v, c in edges:
        out[u].append(len(head))
        head.append(v)
        res.append(c)
        out[v].append(len(head))
        head.append(u)
        res.append(c)
    value = 0
    while True:
        prev = [-1] * n
        prev[s] = -2
        queue = deque([s])
        while queue and prev[t] == -1:
            x = queue.popleft()
            for k in out[x]:
                y = head[k]
                if res[k] > 0 and prev[y] == -1:
                    prev[y] = k
                    queue.append(y)
        if prev[t] == -1:
            break
        push = None
        y = t
        while y != s:
            k = prev[y]
            push = res[k] if push is None else min(push, res[k])
            y = head[k ^ 1]
        y = t
        while y != s:
            k = prev[y]
            res[k] -= push
            res[k ^ 1] += push
            y = head[k ^ 1]
        value += push
    # the two arcs of an edge are each other's reverse, so the net u -> v flow is c - residual
    flow = [edges[i][2] - res[2 * i] for i in range(len(edges))]
    return value, flow


def min_cut_by_enumeration(g, s: int, t: int) -> int:
    """Minimum s-t cut over all 2^(n-2) node subsets."""
    n = g.n
    if n > CUT_ENUM_LIMIT:
        raise ValueError(f"cut enumeration limited to n <= {CUT_ENUM_LIMIT}")
    edges = _edges(g)
    others = [x for x in range(n) if x not in (s, t)]
    best = None
    for r in range(len(others) + 1):
        for extra in combinations(others, r):
            side = {s, *extra}
            c = sum(w for u, v, w in edges if (u in side) != (v in side))
            best = c if best is None else min(best, c)
    return best


def st_opt_congestion(g, s: int, t: int, F: float = 1.0) -> float:
    if F <= 0:
        raise ValueError("F must be positive")
    value, _ = exact_max_flow(g, s, t)
    if value == 0:
        raise ValueError("source and sink are disconnected")
    return F / value


def cut_of(n: int, edges, side) -> float:
    side = set(side)
    return sum(w for u, v, w in edges if (u in side) != (v in side))


# ---------------------------------------------------------------- trees


def _tree_adjacency(n: int, tree_edges):
    adj: dict[int, list[tuple[int, int]]] = {x: [] for x in range(n)}
    for k, (x, y) in tree_edges.items():
        adj[x].append((y, k))
        adj[y].append((x, k))
    return adj


def tree_path(n: int, tree_edges: dict[int, tuple[int, int]], x: int, y: int) -> list[int]:
    """Edge ids on the unique tree path from x to y (breadth-first search)."""
    adj = _tree_adjacency(n, tree_edges)
    prev = {x: None}
    queue = deque([x])
    while queue:
        z = queue.popleft()
        if z == y:
            break
        for w, k in adj[z]:
            if w not in prev:
                prev[w] = (z, k)
                queue.append(w)
    if y not in prev:
        raise ValueError("tree does not connect the endpoints")
    path = []
    while prev[y] is not None:
        z, k = prev[y]
        path.append(k)
        y = z
    return path


def brute_tree_flow(N: int, edges, tree_edge_ids) -> dict[int, float]:
    """Route every edge's capacity along its tree path; total per tree edge.

    ``edges`` is a list of (a, b, cap) indexed by edge id; ``tree_edge_ids``
    are the ids of the spanning tree's edges.
    """
    tree = {k: (edges[k][0], edges[k][1]) for k in tree_edge_ids}
    if len(tree) != N - 1:
        raise ValueError("not a spanning tree")
    out = {k: 0.0 for k in tree}
    for a, b, c in edges:
        for k in tree_path(N, tree, a, b):
            out[k] += c
    return out


def _root_paths(N: int, tree: dict[int, tuple[int, int]], root: int):
    adj = _tree_adjacency(N, tree)
    up = {root: []}
    queue = deque([root])
    while queue:
        z = queue.popleft()
        for w, k in adj[z]:
            if w not in up:
                up[w] = up[z] + [k]
                queue.append(w)
    if len(up) != N:
        raise ValueError("tree is not spanning")
    return up


def brute_stretch(N: int, edges, lengths, tree_edge_ids, weighted: bool = True) -> float:
    """Average stretch via root-path intersection: the tree path of (x, y) is
    the symmetric difference of the two root paths.

    Returns sum(d_T * w) / sum(len * w) with w = cap (or 1).
    """
    tree = {k: (edges[k][0], edges[k][1]) for k in tree_edge_ids}
    up = _root_paths(N, tree, 0)
    num = 0.0
    den = 0.0
    for k, (a, b, c) in enumerate(edges):
        pa, pb = set(up[a]), set(up[b])
        d = sum(lengths[e] for e in pa ^ pb)
        w = c if weighted else 1
        num += d * w
        den += lengths[k] * w
    return num / den


def subtree_sums(n: int, parent: list[int], values: list[float]) -> list[float]:
    """For each node, the sum of values over its subtree (parent -1 at the root)."""
    total = [0.0] * n
    for x in range(n):
        y = x
        seen = 0
        while y >= 0:
            total[y] += values[x]
            y = parent[y]
            seen += 1
            if seen > n:
                raise ValueError("parent pointers contain a cycle")
    return total


def root_path_sums(n: int, parent: list[int], values: list[float]) -> list[float]:
    """For each node, the sum of values over the nodes on its root path
    excluding the root (values index the edge to the parent)."""
    out = [0.0] * n
    for x in range(n):
        y = x
        acc = 0.0
        while parent[y] >= 0:
            acc += values[y]
            y = parent[y]
        out[x] = acc
    return out


def bfs_distances(n: int, adj: list[list[int]], root: int) -> list[int]:
    dist = [-1] * n
    dist[root] = 0
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in adj[x]:
            if dist[y] < 0:
                dist[y] = dist[x] + 1
                queue.append(y)
    return dist


def components_after_removal(n: int, parent: list[int], removed: set[int]) -> list[list[int]]:
    """Components of a rooted tree after deleting the edges (x, parent[x])
    for x in ``removed``."""
    top = {}

    def find(x):
        path = []
        while x not in top:
            if parent[x] < 0 or x in removed:
                top[x] = x
                break
            path.append(x)
            x = parent[x]
        t = top[x]
        for y in path:
            top[y] = t
        return t

    groups: dict[int, list[int]] = {}
    for x in range(n):
        groups.setdefault(find(x), []).append(x)
    return [sorted(v) for _, v in sorted(groups.items())]


def potential_hp(n: int, edges, trees, b, f, alpha, prec: int = 50) -> Decimal:
    """phi = smax(f / cap) + smax(2 alpha R (b - excess(f))) in ``prec``-digit decimals.

    ``edges`` are (u, v, cap) with excess = inflow minus outflow; ``trees``
    are (parent, cap) lists whose non-root nodes each give one row of R:
    the subtree sum of the residual divided by that node's capacity. Inputs
    are converted exactly, so central differences at tiny steps stay clean.
    """
    with localcontext() as ctx:
        ctx.prec = prec
        D = Decimal
        res = [D(x) for x in b]
        xs = []
        for (u, v, c), fe in zip(edges, f):
            fe = D(fe)
            res[v] -= fe
            res[u] += fe
            xs.append(fe / D(c))
        ys = []
        scale = 2 * D(alpha)
        for parent, cap in trees:
            sums = [D(0)] * n
            for x in range(n):
                y = x
                while y >= 0:
                    sums[y] += res[x]
                    y = parent[y]
            ys.extend(scale * sums[x] / D(cap[x]) for x in range(n) if parent[x] >= 0)

        def smax(vals):
            return sum((v.exp() + (-v).exp() for v in vals), D(0)).ln()

        return smax(xs) + smax(ys)
