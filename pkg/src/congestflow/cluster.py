"""Cluster graphs: a partition of the network into tree-spanned clusters.

Each cluster has one leader and a spanning tree of its induced subgraph
rooted at the leader. Cluster edges form a multiset over cluster pairs; each
maps (psi) to a physical edge with one endpoint in each of the two clusters.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .congest import (
    RoundLedger,
    bfs_tree,
    adjacency_lists,
)
from .graph import Graph


@dataclass(eq=False)
class Multigraph:
    """Capacitated, lengthed multigraph on nodes 0..N-1 (no self-loops)."""

    N: int
    a: np.ndarray
    b: np.ndarray
    cap: np.ndarray
    length: np.ndarray
    eid: np.ndarray = None  # id of each edge in the owning structure

    def __post_init__(self):
        self.a = np.asarray(self.a, dtype=np.int64)
        self.b = np.asarray(self.b, dtype=np.int64)
        self.cap = np.asarray(self.cap, dtype=float)
        self.length = np.asarray(self.length, dtype=float)
        if self.eid is None:
            self.eid = np.arange(self.a.shape[0], dtype=np.int64)
        else:
            self.eid = np.asarray(self.eid, dtype=np.int64)

    @property
    def M(self) -> int:
        return int(self.a.shape[0])

    def incidence(self) -> list[list[tuple[int, int]]]:
        """Per node, (neighbor, edge index) for every incident edge."""
        inc: list[list[tuple[int, int]]] = [[] for _ in range(self.N)]
        for k, (x, y) in enumerate(zip(self.a.tolist(), self.b.tolist())):
            inc[x].append((y, k))
            inc[y].append((x, k))
        return inc

    def neighbor_lists(self) -> list[list[int]]:
        nb: list[set[int]] = [set() for _ in range(self.N)]
        for x, y in zip(self.a.tolist(), self.b.tolist()):
            nb[x].add(y)
            nb[y].add(x)
        return [sorted(s) for s in nb]

    def subset(self, keep: np.ndarray, cap: np.ndarray | None = None) -> "Multigraph":
        keep = np.asarray(keep)
        return Multigraph(
            self.N, self.a[keep], self.b[keep],
            self.cap[keep] if cap is None else cap,
            self.length[keep], self.eid[keep],
        )


ContractedMultigraph = Multigraph


@dataclass(eq=False)
class ClusterGraph:
    g: Graph
    cluster_of: np.ndarray  # node -> cluster id
    leaders: np.ndarray  # one node per cluster, indexed by cluster id
    tree_parent: np.ndarray  # node -> parent inside its cluster tree, -1 at the leader
    ea: np.ndarray  # cluster edges: endpoint clusters, capacity, length, physical edge
    eb: np.ndarray
    ecap: np.ndarray
    elen: np.ndarray
    ephys: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.cluster_of = np.asarray(self.cluster_of, dtype=np.int64)
        self.leaders = np.asarray(self.leaders, dtype=np.int64)
        self.tree_parent = np.asarray(self.tree_parent, dtype=np.int64)
        self.ea = np.asarray(self.ea, dtype=np.int64)
        self.eb = np.asarray(self.eb, dtype=np.int64)
        self.ecap = np.asarray(self.ecap, dtype=float)
        self.elen = np.asarray(self.elen, dtype=float)
        self.ephys = np.asarray(self.ephys, dtype=np.int64)

    @property
    def N(self) -> int:
        return int(self.cluster_of.max()) + 1 if self.cluster_of.size else 0

    @property
    def M(self) -> int:
        return int(self.ea.shape[0])

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.cluster_of, minlength=self.N)

    def members(self) -> list[list[int]]:
        if "members" not in self._cache:
            out: list[list[int]] = [[] for _ in range(self.N)]
            for x, c in enumerate(self.cluster_of.tolist()):
                out[c].append(x)
            self._cache["members"] = out
        return self._cache["members"]

    def node_depths(self) -> np.ndarray:
        """Depth of every node in its cluster tree."""
        if "depth" not in self._cache:
            n = self.g.n
            depth = np.full(n, -1, dtype=np.int64)
            children: list[list[int]] = [[] for _ in range(n)]
            for x, p in enumerate(self.tree_parent.tolist()):
                if p >= 0:
                    children[p].append(x)
            for r in self.leaders.tolist():
                depth[r] = 0
                queue = deque([r])
                while queue:
                    x = queue.popleft()
                    for y in children[x]:
                        depth[y] = depth[x] + 1
                        queue.append(y)
            self._cache["depth"] = depth
        return self._cache["depth"]

    def depths(self) -> np.ndarray:
        """Depth of each cluster's spanning tree."""
        d = self.node_depths()
        out = np.zeros(self.N, dtype=np.int64)
        np.maximum.at(out, self.cluster_of, np.maximum(d, 0))
        return out

    @property
    def max_depth(self) -> int:
        return int(self.depths().max()) if self.N else 0

    def multigraph(self) -> Multigraph:
        return Multigraph(self.N, self.ea, self.eb, self.ecap, self.elen, np.arange(self.M))

    def with_edges(self, keep=None, cap=None, length=None) -> "ClusterGraph":
        keep = np.arange(self.M) if keep is None else np.asarray(keep)
        return ClusterGraph(
            self.g, self.cluster_of, self.leaders, self.tree_parent,
            self.ea[keep], self.eb[keep],
            self.ecap[keep] if cap is None else cap,
            self.elen[keep] if length is None else length,
            self.ephys[keep],
        )

    def dump(self) -> str:
        rows = []
        depths = self.depths()
        for c, mem in enumerate(self.members()):
            tree_edges = [[x, int(self.tree_parent[x])] for x in mem if self.tree_parent[x] >= 0]
            rows.append({
                "cluster_id": c,
                "leader": int(self.leaders[c]),
                "members": mem,
                "tree_edges": tree_edges,
                "depth": int(depths[c]),
            })
        return json.dumps(rows, sort_keys=True)


def singleton_cluster_graph(g: Graph) -> ClusterGraph:
    ids = np.arange(g.n)
    return ClusterGraph(
        g, ids, ids.copy(), np.full(g.n, -1), g.u.copy(), g.v.copy(),
        g.cap.astype(float), np.ones(g.m), np.arange(g.m),
    )


def cluster_graph_from_labels(g: Graph, labels: Sequence[int], leaders: Sequence[int] | None = None) -> ClusterGraph:
    """Cluster graph whose clusters are the given node labels.

    Each cluster gets a BFS spanning tree of its induced subgraph rooted at
    its leader (smallest member by default). Labels must be 0..N-1 and each
    label class must induce a connected subgraph.
    """
    labels = np.asarray(labels, dtype=np.int64)
    N = int(labels.max()) + 1
    members: list[list[int]] = [[] for _ in range(N)]
    for x, c in enumerate(labels.tolist()):
        members[c].append(x)
    if leaders is None:
        leaders = [mem[0] for mem in members]
    parent = np.full(g.n, -1, dtype=np.int64)
    for c, mem in enumerate(members):
        allowed = set(mem)
        sub = [[w for w, _ in g.adj[x] if w in allowed] if x in allowed else [] for x in range(g.n)]
        t = bfs_tree(sub, int(leaders[c]))
        if len(t.parent) != len(mem):
            raise ValueError(f"cluster {c} does not induce a connected subgraph")
        for x, p in t.parent.items():
            parent[x] = p
    cross = labels[g.u] != labels[g.v]
    idx = np.nonzero(cross)[0]
    return ClusterGraph(
        g, labels, np.asarray(leaders), parent, labels[g.u[idx]], labels[g.v[idx]],
        g.cap[idx].astype(float), np.ones(idx.size), idx,
    )


def contract(cg: ClusterGraph) -> Multigraph:
    keep = cg.ea != cg.eb
    return Multigraph(cg.N, cg.ea[keep], cg.eb[keep], cg.ecap[keep], cg.elen[keep],
                      np.nonzero(keep)[0])


def validate(cg: ClusterGraph) -> list[str]:
    """Check the four structural conditions; returns a list of violations."""
    out: list[str] = []
    g = cg.g
    n = g.n
    if cg.cluster_of.shape != (n,):
        return ["(I) cluster assignment does not cover every node"]
    N = cg.N
    sizes = np.bincount(cg.cluster_of, minlength=N)
    if cg.cluster_of.min() < 0 or np.any(sizes == 0):
        out.append("(I) cluster ids are not a contiguous partition")
    lead_count = np.zeros(N, dtype=np.int64)
    for x in cg.leaders.tolist():
        if 0 <= x < n:
            lead_count[cg.cluster_of[x]] += 1
        else:
            out.append(f"(II) leader {x} is not a node")
    for c in np.nonzero(lead_count != 1)[0].tolist():
        out.append(f"(II) cluster {c} has {int(lead_count[c])} leaders")
    if cg.leaders.shape[0] == N and np.all(lead_count == 1):
        if np.any(cg.cluster_of[cg.leaders] != np.arange(N)):
            out.append("(II) leaders are not indexed by cluster id")
    # (III) trees
    edge_set = {(int(a), int(b)) for a, b, _, _ in g.edges()}
    leader_set = set(cg.leaders.tolist())
    for x in range(n):
        p = int(cg.tree_parent[x])
        if p < 0:
            if x not in leader_set:
                out.append(f"(III) node {x} has no parent but is not a leader")
            continue
        if x in leader_set:
            out.append(f"(III) leader {x} has a parent")
        if not 0 <= p < n or cg.cluster_of[p] != cg.cluster_of[x]:
            out.append(f"(III) parent of {x} lies outside its cluster")
        elif (min(x, p), max(x, p)) not in edge_set:
            out.append(f"(III) tree edge ({x},{p}) is not a network edge")
    if not any(s.startswith("(III)") for s in out):
        for x in range(n):
            seen = 0
            y = x
            while cg.tree_parent[y] >= 0 and seen <= n:
                y = int(cg.tree_parent[y])
                seen += 1
            if seen > n:
                out.append(f"(III) cycle in cluster tree through {x}")
                break
    # (IV) edge map
    used: dict[int, int] = {}
    for k in range(cg.M):
        a, b, p = int(cg.ea[k]), int(cg.eb[k]), int(cg.ephys[k])
        if a == b:
            out.append(f"(IV) cluster edge {k} is a self-loop")
            continue
        if not 0 <= p < g.m:
            out.append(f"(IV) cluster edge {k} maps to missing edge {p}")
            continue
        cu, cv = int(cg.cluster_of[g.u[p]]), int(cg.cluster_of[g.v[p]])
        if {cu, cv} != {a, b}:
            out.append(f"(IV) cluster edge {k} maps to an edge between clusters {cu},{cv}")
        if p in used:
            out.append(f"(IV) cluster edges {used[p]} and {k} share physical edge {p}")
        used[p] = k
        if cg.ecap[k] <= 0:
            out.append(f"(IV) cluster edge {k} has nonpositive capacity")
    return out


# ---------------------------------------------------------------- cluster-level simulation


class Aggregator:
    """Declared combine rule for a cluster's inbox."""

    def __init__(self, kind: str, k: int = 1):
        if kind not in ("min", "max", "sum", "topk"):
            raise ValueError(f"unknown aggregator {kind!r}")
        self.kind = kind
        self.k = k

    def combine(self, x: tuple, y: tuple) -> tuple:
        if self.kind == "min":
            return min(x, y)
        if self.kind == "max":
            return max(x, y)
        if self.kind == "sum":
            if len(x) != len(y):
                raise BoundedSpaceViolation("sum aggregator needs equal-length payloads")
            return tuple(p + q for p, q in zip(x, y))
        return tuple(sorted(set(x) | set(y))[: self.k])

    def reduce(self, payloads: list[tuple]) -> tuple | None:
        acc = None
        for p in payloads:
            acc = p if acc is None else self.combine(acc, p)
        if acc is not None and self.kind == "topk":
            acc = tuple(sorted(set(acc))[: self.k])
        return acc


class BoundedSpaceViolation(RuntimeError):
    pass


class ClusterProtocol:
    """Cluster-level program whose every step is tree-emulable.

    Each round a cluster broadcasts one payload (or None) over all of its
    cluster edges; what arrives is folded with ``aggregator`` and handed to
    ``update`` together with the current state.
    """

    name = "cluster-protocol"
    aggregator = Aggregator("min")

    def initial(self, c: int, size: int) -> Any:
        return None

    def emit(self, c: int, state: Any, rnd: int) -> tuple | None:
        return None

    def update(self, c: int, state: Any, agg: tuple | None, rnd: int) -> Any:
        return state

    def output(self, c: int, state: Any) -> Any:
        return state


def _check_payload(p, budget: int, name: str) -> tuple:
    if not isinstance(p, tuple) or len(p) < 1:
        raise BoundedSpaceViolation(f"{name}: payload must be a nonempty tuple")
    if len(p) > budget:
        raise BoundedSpaceViolation(f"{name}: {len(p)}-word payload exceeds budget {budget}")
    return p


def run_cluster_direct(mg: Multigraph, sizes: Sequence[int], protocol: ClusterProtocol,
                       budget: int = 4, round_cap: int = 10**6) -> tuple[list, int]:
    """Reference execution on the contracted multigraph (one copy per edge)."""
    inc = mg.incidence()
    states = [protocol.initial(c, int(sizes[c])) for c in range(mg.N)]
    last = 0
    rnd = 0
    while True:
        rnd += 1
        if rnd > round_cap:
            raise RuntimeError("cluster protocol did not quiesce")
        out = [protocol.emit(c, states[c], rnd) for c in range(mg.N)]
        if all(p is None for p in out):
            break
        for p in out:
            if p is not None:
                _check_payload(p, budget, protocol.name)
        new_states = []
        for c in range(mg.N):
            got = [out[w] for w, _ in inc[c] if out[w] is not None]
            agg = protocol.aggregator.reduce(got)
            if agg is not None:
                _check_payload(agg, budget, protocol.name)
            new = protocol.update(c, states[c], agg, rnd)
            if protocol.output(c, new) != protocol.output(c, states[c]):
                last = rnd
            new_states.append(new)
        states = new_states
    return [protocol.output(c, s) for c, s in enumerate(states)], last


def simulate_on_network(cg: ClusterGraph, protocol: ClusterProtocol,
                        ledger: RoundLedger | None = None, phase: str | None = None,
                        round_cap: int = 10**6) -> tuple[list, RoundLedger]:
    """Emulate a cluster-level protocol on the physical network.

    Cluster state lives at the leader. Each simulated round the leader's
    payload is broadcast down the cluster tree, crosses every physical edge
    that is the image of a cluster edge, and the received payloads are folded
    up the tree with the declared aggregator. Clusters larger than ceil(sqrt n)
    are instead charged the BFS-pipelined cost D + (number of large clusters).
    """
    ledger = RoundLedger() if ledger is None else ledger
    phase = phase or protocol.name
    g = cg.g
    n = g.n
    N = cg.N
    budget = ledger.budget_words
    sizes = cg.sizes
    depth = cg.node_depths()
    order = np.argsort(-depth, kind="stable").tolist()  # deepest first
    children_of = cg.tree_parent
    lead = cg.leaders.tolist()
    cof = cg.cluster_of.tolist()
    # physical endpoint pairs carrying cluster edges
    links = [(int(g.u[p]), int(g.v[p])) for p in cg.ephys.tolist()]
    threshold = math.isqrt(n - 1) + 1 if n > 1 else 1  # ceil(sqrt(n))
    large = [c for c in range(N) if sizes[c] > threshold]
    cdepth = cg.depths()
    small_depth = max((int(cdepth[c]) for c in range(N) if sizes[c] <= threshold), default=0)
    if large:
        D = bfs_tree(adjacency_lists(g), 0).depth
        ledger.charge(phase + ":bfs", D)
        large_cost = D + len(large)
    else:
        large_cost = 0
    per_round = 1 + 2 * max(small_depth, large_cost)

    states = [protocol.initial(c, int(sizes[c])) for c in range(N)]
    last = 0
    rnd = 0
    while True:
        rnd += 1
        if rnd > round_cap:
            raise RuntimeError("cluster protocol did not quiesce")
        emitted = [protocol.emit(c, states[c], rnd) for c in range(N)]
        if all(p is None for p in emitted):
            break
        # broadcast: every member learns its cluster's payload
        at_node = [emitted[cof[x]] for x in range(n)]
        for x in range(n):
            if at_node[x] is not None and children_of[x] >= 0:
                ledger.record_message(phase, len(_check_payload(at_node[x], budget, protocol.name)))
        # exchange across physical images of cluster edges
        partial: list[tuple | None] = [None] * n
        agg = protocol.aggregator
        for x, y in links:
            for src, dst in ((x, y), (y, x)):
                p = at_node[src]
                if p is None:
                    continue
                ledger.record_message(phase, len(p))
                partial[dst] = p if partial[dst] is None else agg.combine(partial[dst], p)
        # convergecast partial aggregates to leaders
        for x in order:
            par = int(children_of[x])
            if par >= 0 and partial[x] is not None:
                ledger.record_message(phase, len(_check_payload(partial[x], budget, protocol.name)))
                partial[par] = partial[x] if partial[par] is None else agg.combine(partial[par], partial[x])
        new_states = []
        for c in range(N):
            a = partial[lead[c]]
            if a is not None and agg.kind == "topk":
                a = tuple(sorted(set(a))[: agg.k])
            new = protocol.update(c, states[c], a, rnd)
            if protocol.output(c, new) != protocol.output(c, states[c]):
                last = rnd
            new_states.append(new)
        states = new_states
    ledger.charge(phase, last * per_round)
    return [protocol.output(c, s) for c, s in enumerate(states)], ledger


def simulation_round_cost(cg: ClusterGraph) -> int:
    """Rounds charged per simulated round by ``simulate_on_network``."""
    n = cg.g.n
    threshold = math.isqrt(n - 1) + 1 if n > 1 else 1
    sizes = cg.sizes
    cdepth = cg.depths()
    small = max((int(cdepth[c]) for c in range(cg.N) if sizes[c] <= threshold), default=0)
    large = [c for c in range(cg.N) if sizes[c] > threshold]
    large_cost = bfs_tree(adjacency_lists(cg.g), 0).depth + len(large) if large else 0
    return 1 + 2 * max(small, large_cost)


class MinIdFlood(ClusterProtocol):
    """Every cluster learns the smallest cluster id in its component."""

    name = "min-id-flood"
    aggregator = Aggregator("min")

    def initial(self, c, size):
        return (c, True)

    def emit(self, c, state, rnd):
        return (state[0],) if state[1] else None

    def update(self, c, state, agg, rnd):
        if agg is not None and agg[0] < state[0]:
            return (agg[0], True)
        return (state[0], False)

    def output(self, c, state):
        return state[0]


class ClusterBFS(ClusterProtocol):
    """BFS over clusters from ``root``; output is (distance, parent cluster)."""

    name = "cluster-bfs"
    aggregator = Aggregator("min")

    def __init__(self, root: int = 0):
        self.root = root

    def initial(self, c, size):
        return (0, -1, True) if c == self.root else (None, None, False)

    def emit(self, c, state, rnd):
        return (state[0], c) if state[2] else None

    def update(self, c, state, agg, rnd):
        if state[0] is None and agg is not None:
            return (agg[0] + 1, agg[1], True)
        return (state[0], state[1], False)

    def output(self, c, state):
        return state[0], state[1]


class NeighborhoodSum(ClusterProtocol):
    """Iterated neighbor sums of cluster sizes for a fixed number of rounds."""

    name = "neighborhood-sum"
    aggregator = Aggregator("sum")

    def __init__(self, rounds: int = 3):
        self.rounds = rounds

    def initial(self, c, size):
        return (size, 0)

    def emit(self, c, state, rnd):
        return (state[0],) if rnd <= self.rounds else None

    def update(self, c, state, agg, rnd):
        return ((agg[0] if agg is not None else 0) + state[0], rnd)

    def output(self, c, state):
        return state[0]


class NearestIds(ClusterProtocol):
    """Each cluster collects the k smallest cluster ids within a fixed radius."""

    name = "nearest-ids"

    def __init__(self, k: int = 3, radius: int = 3):
        self.k = k
        self.radius = radius
        self.aggregator = Aggregator("topk", k)

    def initial(self, c, size):
        return (c,)

    def emit(self, c, state, rnd):
        return tuple(state) if rnd <= self.radius else None

    def update(self, c, state, agg, rnd):
        if agg is None:
            return state
        return tuple(sorted(set(state) | set(agg))[: self.k])
