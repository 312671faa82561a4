"""Congestion approximator from sampled virtual trees.

A virtual tree is built level by level: sparsify the current cluster graph,
run a multiplicative-weights loop of low-stretch trees to get a set of
j-trees, sample one, merge each of its components into a cluster, and
repeat on the core. Once few clusters remain the same step runs without
depth-control removals until a single cluster is left.

Every forest edge becomes one row of R: the demand inside the subtree below
it divided by its capacity.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .cluster import ClusterGraph, Multigraph, simulation_round_cost, singleton_cluster_graph
from .congest import RoundLedger, bfs_tree, adjacency_lists
from .graph import Graph
from .jtree import (
    HGraph,
    Skeleton,
    TreeFlow,
    build_H,
    build_jtree,
    sample_removal_set,
    select_F,
    skeletonize,
    tree_flow,
)
from .lsst import SpanningTreeResult, low_stretch_tree
from .rng import substream
from .sparsify import sparsify

SPARSIFY_EPS = 0.5
LENGTH_CEILING = 2.0**32
C_S = 1.0


def default_beta(n: int) -> int:
    lg = math.log2(max(n, 2))
    return max(2, round(2 ** (lg**0.75)))


def default_stop_threshold(n: int) -> int:
    return max(32, math.ceil(math.sqrt(n) * math.log2(max(n, 2))))


def default_k(n: int) -> int:
    return max(1, math.ceil(math.log2(max(n, 2))))


def default_alpha(n: int) -> float:
    return 4.0 * max(1, math.ceil(math.log2(max(n, 2))))


@dataclass
class ApproxParams:
    k: int | None = None
    alpha: float | None = None
    beta: int | None = None
    stop_threshold: int | None = None
    c_s: float = C_S
    s_cap: int | None = None

    def resolved(self, n: int) -> "ApproxParams":
        return ApproxParams(
            k=self.k or default_k(n),
            alpha=self.alpha or default_alpha(n),
            beta=self.beta or default_beta(n),
            stop_threshold=self.stop_threshold or default_stop_threshold(n),
            c_s=self.c_s,
            s_cap=self.s_cap,
        )


# ---------------------------------------------------------------- distribution level


@dataclass
class Member:
    weight: float
    tree: SpanningTreeResult
    tf: TreeFlow
    F: np.ndarray
    removal: np.ndarray
    h: HGraph
    skel: Skeleton


@dataclass
class DistributionLevel:
    members: list[Member]
    lengths: np.ndarray  # final MWU lengths
    iterations: int
    covered: bool
    rounds: int = 0

    @property
    def weights(self) -> np.ndarray:
        return np.asarray([m.weight for m in self.members])

    def sample(self, rng: np.random.Generator) -> Member:
        w = self.weights
        return self.members[int(rng.choice(len(self.members), p=w / w.sum()))]


def _is_tree(mg: Multigraph) -> bool:
    if mg.M != mg.N - 1:
        return False
    seen = {0}
    stack = [0]
    nb = mg.neighbor_lists()
    while stack:
        x = stack.pop()
        for y in nb[x]:
            if y not in seen:
                seen.add(y)
                stack.append(y)
    return len(seen) == mg.N


def _normalize(lengths: np.ndarray) -> np.ndarray:
    out = np.floor(lengths * (LENGTH_CEILING / lengths.max()))
    return np.maximum(out, 1.0)


def edge_loads(mg: Multigraph, member_h: HGraph, tf: TreeFlow) -> np.ndarray:
    """Relative load per level edge: tree-flow load for surviving tree edges,
    1 for edges kept at their own capacity, 0 for edges routed through the tree."""
    out = np.zeros(mg.M)
    h = member_h.graph
    out[h.eid[~member_h.is_tree]] = 1.0
    tree = tf.tree
    rl = tf.rload
    ch = {int(tree.parent_edge[x]): x for x in tree.order[1:].tolist()}
    for k in h.eid[member_h.is_tree].tolist():
        out[k] = rl[ch[k]]
    return out


def build_distribution_level(mg, j: int, rng: np.random.Generator, sizes=None, n: int | None = None,
                             alpha: float | None = None, s_cap: int | None = None,
                             c_s: float = C_S, beta: int | None = None, removal: bool = True,
                             ledger: RoundLedger | None = None, round_cost: int = 1,
                             phase: str = "distribution") -> DistributionLevel:
    """Multiplicative-weights loop over low-stretch trees producing j-tree members.

    Lengths start proportional to 1/cap; after each member every edge's
    length is multiplied by exp(rload / (alpha * max rload)) and the vector
    is rescaled to integers with maximum 2^32. Stops after ``s_cap``
    iterations or once every edge has carried at least half the maximum
    load in some member. Members with the same tree and removed edges are
    merged; weights are uniform over iterations.
    """
    if isinstance(mg, ClusterGraph):
        sizes = mg.sizes if sizes is None else sizes
        n = mg.g.n if n is None else n
        mg = mg.multigraph()
    N = mg.N
    if j < 1:
        raise ValueError("j must be at least 1")
    sizes = np.ones(N) if sizes is None else np.asarray(sizes)
    n = int(np.sum(sizes)) if n is None else n
    alpha = default_alpha(n) if alpha is None else alpha
    beta = default_beta(n) if beta is None else beta
    if s_cap is None:
        s_cap = max(1, math.ceil(c_s * beta * math.log2(max(N, 2))))
    lengths = _normalize(1.0 / mg.cap)
    tree_input = _is_tree(mg)
    if tree_input:
        s_cap = 1
    members: dict[tuple, Member] = {}
    covered = np.zeros(mg.M, dtype=bool)
    rounds = 0
    it = 0
    for it in range(1, s_cap + 1):
        t = low_stretch_tree(Multigraph(N, mg.a, mg.b, mg.cap, lengths, mg.eid), lengths, rng,
                             round_cost=round_cost)
        rounds += t.rounds
        R = sample_removal_set(None, t, rng, sizes, n) if removal else np.zeros(0, dtype=np.int64)
        method = "naive"
        if removal and t.N > 1 and int(t.depth.max()) > 4 * math.sqrt(n):
            method = "decomposed"
        tf = tree_flow(mg, t, R if method == "decomposed" else None, method, round_cost=round_cost)
        rounds += tf.rounds
        jj = min(j, max(1, N - 1))
        sel = select_F(tf, jj, R) if N > 1 else None
        F = sel.F if sel is not None else np.zeros(0, dtype=np.int64)
        key = (tuple(t.edges.tolist()), tuple(F.tolist()))
        if key in members:
            members[key].weight += 1.0
        else:
            h = build_H(mg, t, F, tf)
            skel = skeletonize(t, F, tf.flow, jj)
            members[key] = Member(1.0, t, tf, F, R, h, skel)
        m = members[key]
        rl = edge_loads(mg, m.h, tf)
        rmax = float(rl.max()) if rl.size else 0.0
        if rmax > 0 and not tree_input:
            covered |= rl >= rmax / 2
            lengths = _normalize(lengths * np.exp(rl / (alpha * rmax)))
        if tree_input:
            covered[:] = True
        if covered.all():
            break
    if not covered.all():
        warnings.warn(f"distribution loop stopped at {s_cap} iterations without full coverage",
                      RuntimeWarning, stacklevel=2)
    total = sum(m.weight for m in members.values())
    out = sorted(members.values(), key=lambda m: (tuple(m.tree.edges.tolist()), tuple(m.F.tolist())))
    for m in out:
        m.weight /= total
    if ledger is not None:
        ledger.charge(phase, rounds)
    return DistributionLevel(out, lengths, it, bool(covered.all()), rounds)


# ---------------------------------------------------------------- virtual trees


@dataclass
class LevelRecord:
    clusters: int
    j: int
    members: int
    iterations: int
    portals: int
    core_edges: int
    local: bool
    sparsified: bool
    covered: bool = False
    cluster_graph: ClusterGraph = field(repr=False, default=None)


@dataclass
class VirtualTree:
    """Rooted spanning tree over the physical nodes with one capacity per
    non-root node (the capacity of its edge to the parent)."""

    n: int
    root: int
    parent: np.ndarray
    cap: np.ndarray
    levels: list[LevelRecord]
    rounds: int = 0

    @property
    def rows(self) -> np.ndarray:
        return np.nonzero(self.parent >= 0)[0]

    def order(self) -> list[int]:
        ch: list[list[int]] = [[] for _ in range(self.n)]
        for x, p in enumerate(self.parent.tolist()):
            if p >= 0:
                ch[p].append(x)
        out = [self.root]
        i = 0
        while i < len(out):
            out.extend(ch[out[i]])
            i += 1
        if len(out) != self.n:
            raise AssertionError("virtual tree is not spanning")
        return out

    def subtree_sums(self, b: np.ndarray) -> np.ndarray:
        acc = np.asarray(b, dtype=float).copy()
        for x in reversed(self.order()):
            p = self.parent[x]
            if p >= 0:
                acc[p] += acc[x]
        return acc

    def subtree(self, v: int) -> list[int]:
        ch: list[list[int]] = [[] for _ in range(self.n)]
        for x, p in enumerate(self.parent.tolist()):
            if p >= 0:
                ch[p].append(x)
        out = [v]
        i = 0
        while i < len(out):
            out.extend(ch[out[i]])
            i += 1
        return sorted(out)

    @property
    def depth(self) -> int:
        d = np.zeros(self.n, dtype=np.int64)
        for x in self.order()[1:]:
            d[x] = d[self.parent[x]] + 1
        return int(d.max())


def _level_step(cg: ClusterGraph, rng: np.random.Generator, params: ApproxParams, local: bool,
                ledger: RoundLedger | None, depth_index: int):
    n = cg.g.n
    base = cg.multigraph()
    sp_out = sparsify(base, SPARSIFY_EPS, rng)
    # sampled cuts may shrink by (1 - eps); a bypassed graph is exact and needs no correction
    corr = 1.0 if sp_out.bypassed else 1.0 / (1.0 - SPARSIFY_EPS)
    mg = Multigraph(base.N, sp_out.graph.a, sp_out.graph.b, sp_out.graph.cap * corr,
                    sp_out.graph.length, sp_out.graph.eid)
    ephys = cg.ephys[mg.eid]
    N = cg.N
    j = max(1, int(N // (4 * params.beta)))
    cost = simulation_round_cost(cg) if not local else 1
    with warnings.catch_warnings():
        # partial coverage is expected at this scale and is kept in the record
        warnings.simplefilter("ignore", RuntimeWarning)
        dist = build_distribution_level(
            mg, j, rng, sizes=cg.sizes, n=n, alpha=params.alpha, s_cap=params.s_cap,
            c_s=params.c_s, beta=params.beta, removal=not local, ledger=ledger,
            round_cost=cost, phase=f"level{depth_index}:distribution",
        )
    m = dist.sample(rng)
    jt = build_jtree(mg, m.h, m.skel, m.tf, cluster_graph=cg, ephys=ephys)
    if len(jt.portals) >= N:
        # no contraction: fall back to the tree itself as one cluster
        empty = np.zeros(0, dtype=np.int64)
        h = build_H(mg, m.tree, empty, m.tf)
        skel = skeletonize(m.tree, empty, m.tf.flow)
        jt = build_jtree(mg, h, skel, m.tf, cluster_graph=cg, ephys=ephys)
    rec = LevelRecord(N, j, len(dist.members), dist.iterations, len(jt.portals), jt.core_size,
                      local, not sp_out.bypassed, dist.covered, cg)
    return jt, rec


def sample_virtual_tree(g: Graph, rng: np.random.Generator, params: ApproxParams | None = None,
                        ledger: RoundLedger | None = None) -> VirtualTree:
    params = (params or ApproxParams()).resolved(g.n)
    n = g.n
    parent = np.full(n, -1, dtype=np.int64)
    cap = np.zeros(n)
    cg = singleton_cluster_graph(g)
    levels: list[LevelRecord] = []
    local = False
    own = RoundLedger() if ledger is None else ledger
    start = own.rounds_elapsed
    i = 0
    while cg.N > 1:
        local = local or cg.N <= params.stop_threshold
        jt, rec = _level_step(cg, rng, params, local, own, i)
        if not local and len(jt.portals) == cg.N:
            local = True
            jt, rec = _level_step(cg, rng, params, True, own, i)
        levels.append(rec)
        lead = cg.leaders
        for c in np.nonzero(jt.forest_parent >= 0)[0].tolist():
            x = int(lead[c])
            parent[x] = int(lead[jt.forest_parent[c]])
            cap[x] = max(1.0, float(jt.forest_cap[c]))
        cg = jt.next_cg
        i += 1
    root = int(cg.leaders[0])
    levels.append(LevelRecord(1, 0, 0, 0, 1, 0, True, False, cg))
    vt = VirtualTree(n, root, parent, cap, levels)
    vt.order()
    if n > 1:
        D = bfs_tree(adjacency_lists(g), 0).depth
        own.charge("virtual-tree:collect", D + vt.depth)
    vt.rounds = own.rounds_elapsed - start
    return vt


# ---------------------------------------------------------------- approximator


@dataclass
class CongestionApproximator:
    n: int
    trees: list[VirtualTree]
    alpha: float
    matrix: sp.csr_matrix  # rows x n, entry 1/cap for every node below the row's edge
    row_tree: np.ndarray
    row_node: np.ndarray
    row_cap: np.ndarray
    apply_rounds: int = 0

    @property
    def rows(self) -> int:
        return int(self.row_cap.shape[0])


def _subtree_matrix(trees: list[VirtualTree], n: int):
    rows, cols, vals = [], [], []
    row_tree, row_node, row_cap = [], [], []
    base = 0
    for ti, vt in enumerate(trees):
        index = {}
        for x in vt.rows.tolist():
            index[x] = base + len(index)
            row_tree.append(ti)
            row_node.append(x)
            row_cap.append(vt.cap[x])
        for x in range(n):
            y = x
            while vt.parent[y] >= 0:
                rows.append(index[y])
                cols.append(x)
                vals.append(1.0 / vt.cap[y])
                y = int(vt.parent[y])
        base += len(index)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(base, n))
    return mat, np.asarray(row_tree, np.int64), np.asarray(row_node, np.int64), np.asarray(row_cap)


def build_approximator(g: Graph, k: int | None = None, seed: int = 0,
                       params: ApproxParams | None = None,
                       ledger: RoundLedger | None = None) -> CongestionApproximator:
    params = (params or ApproxParams()).resolved(g.n)
    k = params.k if k is None else k
    if k < 1:
        raise ValueError("k must be at least 1")
    ledger = RoundLedger() if ledger is None else ledger
    trees = []
    for i in range(k):
        rng = substream(seed, "approximator", "tree", i)
        sub = RoundLedger(ledger.budget_words, ledger.strict)
        trees.append(sample_virtual_tree(g, rng, params, sub))
        ledger.absorb(sub, prefix="build:")
    mat, rt, rn, rc = _subtree_matrix(trees, g.n)
    D = bfs_tree(adjacency_lists(g), 0).depth if g.n > 1 else 0
    apply_rounds = 2 * max((vt.depth for vt in trees), default=0) + D + k
    return CongestionApproximator(g.n, trees, params.alpha, mat, rt, rn, rc, apply_rounds)


def apply_R(R: CongestionApproximator, b, ledger: RoundLedger | None = None) -> np.ndarray:
    """Per-row subtree demand divided by row capacity."""
    b = np.asarray(b, dtype=float)
    if ledger is not None:
        ledger.charge("apply-R", R.apply_rounds)
    return R.matrix @ b


def apply_Rt(R: CongestionApproximator, p, ledger: RoundLedger | None = None) -> np.ndarray:
    """Adjoint of ``apply_R``: each node sums p_i / cap_i over the rows whose
    subtree contains it, i.e. over the edges on its root path."""
    p = np.asarray(p, dtype=float)
    if ledger is not None:
        ledger.charge("apply-Rt", R.apply_rounds)
    return R.matrix.T @ p
