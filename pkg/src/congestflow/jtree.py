"""One level of the j-tree construction on a cluster multigraph.

Tree edges are addressed by their child node: edge ``c`` of a rooted
spanning tree is (c, parent[c]). Edge *sets* passed between the public
functions are arrays of multigraph edge indices, as the spanning tree
reports them in ``parent_edge``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .cluster import ClusterGraph, Multigraph
from .congest import RoundLedger
from .lsst import SpanningTreeResult, lca_pairs


class JTreeError(ValueError):
    pass


def level_multigraph(x) -> Multigraph:
    if isinstance(x, ClusterGraph):
        return x.multigraph()
    return x


def _children(tree: SpanningTreeResult) -> list[list[int]]:
    ch: list[list[int]] = [[] for _ in range(tree.N)]
    for x in tree.order[1:].tolist():
        ch[int(tree.parent[x])].append(x)
    return ch


def _check_spanning(mg: Multigraph, tree: SpanningTreeResult) -> None:
    if tree.N != mg.N or len(tree.order) != mg.N:
        raise JTreeError("tree does not span the graph")
    for x in tree.order[1:].tolist():
        k = int(tree.parent_edge[x])
        if not 0 <= k < mg.M or {int(mg.a[k]), int(mg.b[k])} != {x, int(tree.parent[x])}:
            raise JTreeError(f"tree edge at node {x} is not a graph edge")


def edge_to_child(tree: SpanningTreeResult) -> dict[int, int]:
    return {int(tree.parent_edge[x]): x for x in tree.order[1:].tolist()}


def _child_mask(tree: SpanningTreeResult, edges) -> np.ndarray:
    lookup = edge_to_child(tree)
    mask = np.zeros(tree.N, dtype=bool)
    for k in np.asarray(edges, dtype=np.int64).tolist():
        if k not in lookup:
            raise JTreeError(f"edge {k} is not a tree edge")
        mask[lookup[k]] = True
    return mask


# ---------------------------------------------------------------- tree flow


@dataclass
class TreeFlow:
    """Absolute flow over each tree edge when every graph edge routes its
    capacity along its tree path. Indexed by child node; the root holds 0."""

    tree: SpanningTreeResult
    flow: np.ndarray
    cap: np.ndarray
    parts: tuple[np.ndarray, np.ndarray, np.ndarray] | None = None
    rounds: int = 0

    @property
    def rload(self) -> np.ndarray:
        out = np.zeros_like(self.flow)
        nz = self.cap > 0
        out[nz] = self.flow[nz] / self.cap[nz]
        return out

    @property
    def tree_nodes(self) -> np.ndarray:
        return self.tree.order[1:]

    def by_edge(self) -> dict[int, float]:
        return {int(self.tree.parent_edge[x]): float(self.flow[x]) for x in self.tree_nodes.tolist()}


def _subtree_sum(tree: SpanningTreeResult, labels: np.ndarray) -> np.ndarray:
    acc = labels.astype(float).copy()
    par = tree.parent
    for x in tree.order[::-1].tolist():
        p = par[x]
        if p >= 0:
            acc[p] += acc[x]
    return acc


def tree_flow(cg, tree: SpanningTreeResult, removal=None, method: str | None = None,
              ledger: RoundLedger | None = None, round_cost: int = 1,
              phase: str = "tree-flow") -> TreeFlow:
    """Per-tree-edge cut capacity of the subtree below it.

    ``method="naive"`` labels each edge +cap at both endpoints and -2cap at
    their lowest common ancestor and sums labels over subtrees.
    ``method="decomposed"`` splits the tree into components of T minus the
    removal set and adds three per-component aggregates (flow leaving the
    lower components, flow leaving the component part, minus the flow
    between the two). Both return identical values.
    """
    mg = level_multigraph(cg)
    _check_spanning(mg, tree)
    if method is None:
        method = "naive" if removal is None else "decomposed"
    cap = np.zeros(tree.N)
    nodes = tree.order[1:]
    cap[nodes] = mg.cap[tree.parent_edge[nodes]]
    if method == "naive":
        labels = np.zeros(tree.N)
        if mg.M:
            lca = lca_pairs(tree, mg.a, mg.b)
            np.add.at(labels, mg.a, mg.cap)
            np.add.at(labels, mg.b, mg.cap)
            np.add.at(labels, lca, -2 * mg.cap)
        flow = _subtree_sum(tree, labels)
        flow[tree.root] = 0.0
        rounds = int(tree.depth.max()) * 2 * round_cost if tree.N > 1 else 0
        if ledger is not None:
            ledger.charge(phase, rounds)
        return TreeFlow(tree, flow, cap, None, rounds)
    if method != "decomposed":
        raise ValueError(f"unknown method {method!r}")
    removed = np.zeros(tree.N, dtype=bool) if removal is None else _child_mask(tree, removal)
    flow, parts, comp_depth, ncomp = _decomposed(mg, tree, removed)
    rounds = (2 * comp_depth + ncomp) * round_cost
    if ledger is not None:
        ledger.charge(phase, rounds)
    return TreeFlow(tree, flow, cap, parts, rounds)


def _decomposed(mg: Multigraph, tree: SpanningTreeResult, removed: np.ndarray):
    N = tree.N
    par = tree.parent.tolist()
    order = tree.order.tolist()
    children = _children(tree)
    # components of T minus the removed edges, named by their top node
    top = [0] * N
    for x in order:
        top[x] = x if par[x] < 0 or removed[x] else top[par[x]]
    tops = [x for x in order if top[x] == x]
    cdepth = [0] * N
    for x in order:
        if top[x] != x:
            cdepth[x] = cdepth[par[x]] + 1
    a, b, cap = mg.a.tolist(), mg.b.tolist(), mg.cap.tolist()
    f1 = np.zeros(N)
    f2 = np.zeros(N)
    f3 = np.zeros(N)
    depth = tree.depth
    from_lca = {}

    def lca(x, y):
        key = (x, y) if x < y else (y, x)
        if key not in from_lca:
            while x != y:
                if depth[x] >= depth[y]:
                    x = par[x]
                else:
                    y = par[y]
            from_lca[key] = x
        return from_lca[key]

    for t in tops:
        # anchor: deepest ancestor inside this component, for every node below its top
        anchor: dict[int, int] = {}
        stack = [t]
        while stack:
            x = stack.pop()
            anchor[x] = x if top[x] == t else anchor[par[x]]
            stack.extend(children[x])
        l1: dict[int, float] = {}
        l2: dict[int, float] = {}
        l3: dict[int, float] = {}

        def add(d, x, w):
            d[x] = d.get(x, 0.0) + w

        for k in range(mg.M):
            x, y, w = a[k], b[k], cap[k]
            ax, ay = anchor.get(x), anchor.get(y)
            if ax is None and ay is None:
                continue
            hx = ax is not None and top[x] != t
            hy = ay is not None and top[y] != t
            # f1: edges leaving the lower components hanging below the component
            if hx and hy:
                add(l1, ax, w)
                add(l1, ay, w)
                add(l1, lca(ax, ay), -2 * w)
            elif hx:
                add(l1, ax, w)
            elif hy:
                add(l1, ay, w)
            # f2 and f3: edges at component nodes
            for u, other, ho in ((x, ay, hy), (y, ax, hx)):
                if top[u] != t:
                    continue
                add(l2, u, w)
                if other is not None:
                    l = lca(u, other)
                    add(l2, l, -w)
                    if ho:
                        add(l3, l, w)
        comp_nodes = [x for x in anchor if top[x] == t]
        comp_nodes.sort(key=lambda x: -cdepth[x])
        for d, arr in ((l1, f1), (l2, f2), (l3, f3)):
            for x, w in d.items():
                arr[x] += w
        for x in comp_nodes:
            if x != t:
                p = par[x]
                f1[p] += f1[x]
                f2[p] += f2[x]
                f3[p] += f3[x]
    flow = f1 + f2 - f3
    flow[tree.root] = 0.0
    return flow, (f1, f2, f3), max(cdepth, default=0), len(tops)


# ---------------------------------------------------------------- removal set


def sample_removal_set(cg, tree: SpanningTreeResult, rng: np.random.Generator,
                       sizes=None, n: int | None = None) -> np.ndarray:
    """Each tree edge is removed independently with probability
    min(1, |c|/sqrt(n)), where |c| is the node count of its child cluster."""
    if isinstance(cg, ClusterGraph):
        sizes = cg.sizes if sizes is None else sizes
        n = cg.g.n if n is None else n
    N = tree.N
    sizes = np.ones(N) if sizes is None else np.asarray(sizes, dtype=float)
    n = int(sizes.sum()) if n is None else n
    nodes = tree.order[1:]
    nodes = np.sort(nodes)
    q = np.minimum(1.0, sizes[nodes] / math.sqrt(max(n, 1)))
    draw = rng.random(nodes.size)
    picked = nodes[draw < q]
    return np.sort(tree.parent_edge[picked])


def component_labels(tree: SpanningTreeResult, cut_mask: np.ndarray) -> np.ndarray:
    """Components of the tree after deleting the edges of the marked child nodes;
    each label is the component's top node."""
    top = np.empty(tree.N, dtype=np.int64)
    par = tree.parent
    for x in tree.order.tolist():
        top[x] = x if par[x] < 0 or cut_mask[x] else top[par[x]]
    return top


# ---------------------------------------------------------------- F selection


@dataclass
class Selection:
    F: np.ndarray  # edge indices: heavy edges plus the removal set
    heavy: np.ndarray  # edge indices chosen by load class
    i0: int
    classes: int
    threshold: float


def select_F(tf: TreeFlow, j: int, removal=None) -> Selection:
    """Heavy-edge selection by geometric load classes.

    Class i holds tree edges with rload in (R/2^i, R/2^(i-1)], R the maximum
    load. i0 is the first class holding at least j/L edges, L the number of
    classes; the heavy set is every edge strictly above R/2^(i0-1).
    """
    tree = tf.tree
    m = tree.N - 1
    if not 1 <= j <= max(m, 1):
        raise JTreeError(f"j={j} outside [1, {max(m, 1)}]")
    removal = np.zeros(0, dtype=np.int64) if removal is None else np.asarray(removal, dtype=np.int64)
    _child_mask(tree, removal)  # rejects edges outside the tree
    nodes = tree.order[1:]
    if nodes.size == 0:
        return Selection(np.zeros(0, dtype=np.int64), np.zeros(0, dtype=np.int64), 1, 0, 0.0)
    load = tf.rload[nodes]
    R = float(load.max())
    L = max(1, math.ceil(math.log2(R + 1)))
    # class index of each edge, ties at exact powers of two go to the upper class
    cls = np.empty(nodes.size, dtype=np.int64)
    for idx, r in enumerate(load.tolist()):
        i = 1
        while r <= R / 2**i and i < 4096:
            i += 1
        cls[idx] = i
    counts = np.bincount(cls)
    i0 = next((i for i in range(1, counts.size) if counts[i] >= j / L), int(cls.max()))
    threshold = R / 2 ** (i0 - 1)
    heavy_nodes = nodes[load > threshold]
    heavy = np.sort(tree.parent_edge[heavy_nodes])
    F = np.union1d(heavy, removal)
    return Selection(F, heavy, i0, L, threshold)


# ---------------------------------------------------------------- H(T, F)


@dataclass
class HGraph:
    """Tree edges outside F with their tree-flow capacity, plus every graph
    edge between different components of T minus F with its own capacity."""

    graph: Multigraph  # eid indexes the level multigraph
    is_tree: np.ndarray
    comp: np.ndarray  # node -> component label (top node) of T minus F
    tree: SpanningTreeResult
    F: np.ndarray


def build_H(cg, tree: SpanningTreeResult, F, tf: TreeFlow | None = None) -> HGraph:
    mg = level_multigraph(cg)
    tf = tree_flow(mg, tree) if tf is None else tf
    fmask = _child_mask(tree, F)
    comp = component_labels(tree, fmask)
    tree_nodes = [x for x in tree.order[1:].tolist() if not fmask[x]]
    te = np.asarray([tree.parent_edge[x] for x in tree_nodes], dtype=np.int64)
    tcap = np.asarray([tf.flow[x] for x in tree_nodes], dtype=float)
    cross = np.nonzero(comp[mg.a] != comp[mg.b])[0]
    idx = np.concatenate([te, cross])
    caps = np.concatenate([tcap, mg.cap[cross]])
    is_tree = np.concatenate([np.ones(te.size, bool), np.zeros(cross.size, bool)])
    order = np.argsort(idx, kind="stable")
    idx, caps, is_tree = idx[order], caps[order], is_tree[order]
    h = Multigraph(mg.N, mg.a[idx], mg.b[idx], caps, mg.length[idx], idx)
    return HGraph(h, is_tree, comp, tree, np.asarray(F, dtype=np.int64))


# ---------------------------------------------------------------- skeleton


@dataclass
class Skeleton:
    portals: list[int]
    primary: list[int]
    secondary: list[int]
    D: np.ndarray  # edge indices cut from portal-to-portal paths
    comp: np.ndarray  # node -> index of its portal in ``portals``
    parent: np.ndarray  # parent inside the component rooted at its portal, -1 at portals
    parent_edge: np.ndarray
    skeleton_nodes: list[int] = field(default_factory=list)


def skeletonize(tree: SpanningTreeResult, F, weight: np.ndarray, j: int | None = None) -> Skeleton:
    """Portals, skeleton path cuts, and portal-rooted components of T minus F.

    ``weight`` is the per-child-node capacity used to pick the cheapest edge
    of each portal-to-portal path (ties by edge index).
    """
    N = tree.N
    par = tree.parent
    fmask = _child_mask(tree, F)
    nbr: list[dict[int, int]] = [dict() for _ in range(N)]  # node -> {neighbor: child node of the edge}
    for x in tree.order[1:].tolist():
        if not fmask[x]:
            p = int(par[x])
            nbr[x][p] = x
            nbr[p][x] = x
    primary = sorted({x for x in np.nonzero(fmask)[0].tolist()} | {int(par[x]) for x in np.nonzero(fmask)[0].tolist()})
    if not primary:
        primary = [int(tree.root)]
    is_portal = np.zeros(N, dtype=bool)
    is_portal[primary] = True
    deg = [len(d) for d in nbr]
    alive = np.ones(N, dtype=bool)
    queue = deque(x for x in range(N) if not is_portal[x] and deg[x] <= 1)
    while queue:
        x = queue.popleft()
        if not alive[x]:
            continue
        alive[x] = False
        for y in nbr[x]:
            if alive[y]:
                deg[y] -= 1
                if not is_portal[y] and deg[y] <= 1:
                    queue.append(y)
    secondary = [x for x in range(N) if alive[x] and not is_portal[x] and deg[x] > 2]
    is_portal[secondary] = True
    portals = sorted(primary + secondary)
    edge_of = tree.parent_edge
    D_children: list[int] = []
    seen_paths: set[int] = set()
    for p in portals:
        for q, c0 in sorted(nbr[p].items()):
            if not alive[q] or c0 in seen_paths:
                continue
            path = [c0]
            prev, cur = p, q
            while not is_portal[cur]:
                nxt = [(y, c) for y, c in nbr[cur].items() if alive[y] and y != prev]
                if len(nxt) != 1:
                    raise AssertionError("skeleton path node without a unique continuation")
                prev, (cur, c) = cur, nxt[0]
                path.append(c)
            seen_paths.add(path[-1])
            seen_paths.add(c0)
            best = min(path, key=lambda c: (weight[c], int(edge_of[c])))
            D_children.append(best)
    dmask = np.zeros(N, dtype=bool)
    dmask[D_children] = True
    comp = np.full(N, -1, dtype=np.int64)
    cpar = np.full(N, -1, dtype=np.int64)
    cedge = np.full(N, -1, dtype=np.int64)
    for i, p in enumerate(portals):
        if comp[p] >= 0:
            raise AssertionError("two portals share a component")
        comp[p] = i
        queue = deque([p])
        while queue:
            x = queue.popleft()
            for y, c in sorted(nbr[x].items()):
                if dmask[c] or comp[y] == i:
                    continue
                if comp[y] >= 0:
                    raise AssertionError("two portals share a component")
                comp[y] = i
                cpar[y] = x
                cedge[y] = edge_of[c]
                queue.append(y)
    if np.any(comp < 0):
        raise AssertionError("component without a portal")
    if j is not None:
        bound = 4 * max(j, int(fmask.sum()), 1)
        assert len(portals) < bound, f"{len(portals)} portals, bound {bound}"
    D = np.sort(edge_of[D_children]) if D_children else np.zeros(0, dtype=np.int64)
    return Skeleton(portals, primary, secondary, D, comp, cpar, cedge,
                    [x for x in range(N) if alive[x]])


# ---------------------------------------------------------------- j-tree


@dataclass
class JTree:
    N: int
    portals: list[int]
    comp: np.ndarray  # level node -> component index (= index of its portal)
    forest_parent: np.ndarray  # -1 at portals
    forest_edge: np.ndarray  # level edge index of the forest edge to the parent
    forest_cap: np.ndarray  # 0 at portals
    core_a: np.ndarray  # core edges between component indices
    core_b: np.ndarray
    core_cap: np.ndarray
    core_edge: np.ndarray  # level edge index
    core_kind: np.ndarray  # 0 = crossing graph edge, 1 = cut skeleton path edge
    next_cg: ClusterGraph | None = None

    @property
    def core_size(self) -> int:
        return int(self.core_a.shape[0])


def build_jtree(cg, h: HGraph, skel: Skeleton, tf: TreeFlow,
                cluster_graph: ClusterGraph | None = None,
                ephys: np.ndarray | None = None) -> JTree:
    """Assemble the j-tree: portal-rooted forest plus a core on the portals.

    Forest edges keep their tree-flow capacity plus the flow of any cut
    skeleton edge whose endpoint lies below them, so that the subtree below
    every forest edge has cut capacity at most the forest capacity.
    ``cluster_graph`` and ``ephys`` (level edge -> physical edge) enable the
    next-level cluster graph.
    """
    mg = level_multigraph(cg)
    tree = tf.tree
    N = tree.N
    ch = edge_to_child(tree)
    fcap = np.zeros(N)
    for x in np.nonzero(skel.parent >= 0)[0].tolist():
        fcap[x] = tf.flow[ch[int(skel.parent_edge[x])]]
    for k in skel.D.tolist():
        c = ch[k]
        w = tf.flow[c]
        for x in (c, int(tree.parent[c])):
            while skel.parent[x] >= 0:
                fcap[x] += w
                x = int(skel.parent[x])
    cross = np.nonzero(~h.is_tree)[0]
    ce = h.graph.eid[cross]
    ccap = h.graph.cap[cross]
    D = skel.D
    dcap = np.asarray([tf.flow[ch[k]] for k in D.tolist()], dtype=float)
    core_edge = np.concatenate([ce, D]).astype(np.int64)
    core_cap = np.concatenate([ccap, dcap])
    core_kind = np.concatenate([np.zeros(ce.size, np.int64), np.ones(D.size, np.int64)])
    core_a = skel.comp[mg.a[core_edge]]
    core_b = skel.comp[mg.b[core_edge]]
    keep = core_a != core_b
    if not np.all(keep):
        raise AssertionError("core edge inside one component")
    jt = JTree(N, list(skel.portals), skel.comp, skel.parent, skel.parent_edge, fcap,
               core_a, core_b, core_cap, core_edge, core_kind)
    if cluster_graph is not None:
        jt.next_cg = next_cluster_graph(cluster_graph, jt, mg, ephys)
    return jt


def next_cluster_graph(cg: ClusterGraph, jt: JTree, mg: Multigraph | None = None,
                       ephys: np.ndarray | None = None) -> ClusterGraph:
    """Merge each component into one cluster led by its portal's leader.

    The new spanning tree is the union of the member cluster trees and the
    physical images of the forest edges, re-rooted at the new leader.
    """
    g = cg.g
    mg = cg.multigraph() if mg is None else mg
    ephys = cg.ephys[mg.eid] if ephys is None else ephys
    n = g.n
    new_of = jt.comp[cg.cluster_of]
    leaders = cg.leaders[np.asarray(jt.portals, dtype=np.int64)]
    adj: list[list[int]] = [[] for _ in range(n)]
    for x, p in enumerate(cg.tree_parent.tolist()):
        if p >= 0:
            adj[x].append(p)
            adj[p].append(x)
    for c in np.nonzero(jt.forest_parent >= 0)[0].tolist():
        e = int(ephys[jt.forest_edge[c]])
        x, y = int(g.u[e]), int(g.v[e])
        adj[x].append(y)
        adj[y].append(x)
    parent = np.full(n, -1, dtype=np.int64)
    seen = np.zeros(n, dtype=bool)
    for r in leaders.tolist():
        seen[r] = True
        queue = deque([r])
        while queue:
            x = queue.popleft()
            for y in sorted(adj[x]):
                if not seen[y]:
                    seen[y] = True
                    parent[y] = x
                    queue.append(y)
    if not np.all(seen):
        raise AssertionError("merged cluster trees do not span their clusters")
    phys = ephys[jt.core_edge]
    return ClusterGraph(g, new_of, leaders, parent, jt.core_a, jt.core_b,
                        jt.core_cap, np.ones(jt.core_size), phys)


# ---------------------------------------------------------------- embeddings


def _forest_path(jt: JTree, x: int) -> list[int]:
    out = []
    while jt.forest_parent[x] >= 0:
        out.append(x)
        x = int(jt.forest_parent[x])
    return out


def verify_embeddings(h: HGraph, jt: JTree, tf: TreeFlow) -> tuple[float, float]:
    """Maximum relative loads of the explicit routings H -> J and J -> H.

    H into J: forest tree edges map to themselves; every other H edge climbs
    to its endpoint portals and crosses its core edge. J into H: forest
    edges map to themselves; each core edge descends from its portals to
    the endpoints of its graph edge, which H carries directly.
    """
    mg = h.graph
    tree = tf.tree
    ch = edge_to_child(tree)
    N = jt.N
    # ---- H -> J
    load_forest = np.zeros(N)
    core_index = {int(k): i for i, k in enumerate(jt.core_edge.tolist())}
    load_core = np.zeros(jt.core_size)
    for i in range(mg.M):
        k = int(mg.eid[i])
        w = float(mg.cap[i])
        x, y = int(mg.a[i]), int(mg.b[i])
        if h.is_tree[i] and k not in core_index:
            c = ch[k]
            load_forest[c] += w
            continue
        load_core[core_index[k]] += w
        for z in (x, y):
            for c in _forest_path(jt, z):
                load_forest[c] += w
    fnodes = np.nonzero(jt.forest_parent >= 0)[0]
    h_to_j = max(
        float(np.max(load_forest[fnodes] / jt.forest_cap[fnodes])) if fnodes.size else 0.0,
        float(np.max(load_core / jt.core_cap)) if jt.core_size else 0.0,
    )
    # ---- J -> H
    hidx = {int(k): i for i, k in enumerate(mg.eid.tolist())}
    load_h = np.zeros(mg.M)
    for c in fnodes.tolist():
        load_h[hidx[int(jt.forest_edge[c])]] += jt.forest_cap[c]
    lmg_a = {}
    for i in range(mg.M):
        lmg_a[int(mg.eid[i])] = (int(mg.a[i]), int(mg.b[i]))
    for i in range(jt.core_size):
        k = int(jt.core_edge[i])
        w = float(jt.core_cap[i])
        load_h[hidx[k]] += w
        for z in lmg_a[k]:
            for c in _forest_path(jt, z):
                load_h[hidx[int(jt.forest_edge[c])]] += w
    j_to_h = float(np.max(load_h / mg.cap)) if mg.M else 0.0
    return h_to_j, j_to_h
