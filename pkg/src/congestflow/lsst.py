"""Low average-stretch spanning trees on cluster multigraphs.

Three layers: ``split_graph`` grows delayed, shrinking BFS balls from random
sources; ``partition`` reruns it until no weight class has too many edges cut;
``low_stretch_tree`` groups edges into geometric length classes and contracts
clusters level by level until one node is left.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .cluster import Multigraph
from .congest import RoundLedger

C_SPLIT = 16.0
# Source-sampling constant. The textbook value 12 makes every node a source
# in the first step whenever N <= 17, which stalls contraction at desk scale.
C_SOURCE = 1.0
STRETCH_RETRIES = 8


def default_z(N: int) -> int:
    lg = math.log2(max(N, 2))
    llg = math.log2(math.log2(max(N, 4)))
    return max(4, round(2 ** math.sqrt(6 * lg * llg)))


def _log_n(N: int) -> float:
    return max(1.0, math.log2(max(N, 1)))


@dataclass
class Clustering:
    labels: np.ndarray  # node -> cluster index
    sources: list[int]  # cluster index -> source node
    parent: np.ndarray  # BFS parent inside the cluster, -1 at the source
    depth: np.ndarray  # hop distance from the cluster's source
    rounds: int = 0

    @property
    def count(self) -> int:
        return len(self.sources)

    def radius(self) -> np.ndarray:
        out = np.zeros(self.count, dtype=np.int64)
        np.maximum.at(out, self.labels, self.depth)
        return out


def split_graph(nbrs: Sequence[Sequence[int]], rho: float, rng: np.random.Generator,
                c_source: float = C_SOURCE) -> Clustering:
    """Cluster an unweighted graph by racing delayed BFS balls of radius <= rho."""
    if rho < 1:
        raise ValueError("rho must be at least 1")
    N = len(nbrs)
    lg = _log_n(N)
    steps = max(1, math.ceil(2 * lg))
    max_delay = int(math.floor(rho / (2 * lg)))
    label = np.full(N, -1, dtype=np.int64)
    parent = np.full(N, -1, dtype=np.int64)
    depth = np.zeros(N, dtype=np.int64)
    sources: list[int] = []
    rounds = 0
    remaining = np.arange(N)
    for t in range(1, steps + 1):
        if remaining.size == 0:
            break
        scale = 2 ** (t / 2)
        if remaining.size < N / (c_source * scale):
            chosen = remaining.copy()
        else:
            k = min(remaining.size, max(1, math.floor(c_source * scale / N * remaining.size)))
            chosen = np.sort(rng.choice(remaining, size=k, replace=False))
        delays = rng.integers(0, max_delay + 1, size=chosen.size)
        budget = rho * (1 - (t - 1) / (2 * lg)) - delays
        alive = np.zeros(N, dtype=bool)
        alive[remaining] = True
        heap = []
        limit = {}
        for s, d, r in zip(chosen.tolist(), delays.tolist(), budget.tolist()):
            label[s] = len(sources)
            sources.append(s)
            limit[s] = math.floor(r)
            heap.append((d, s, s, 0, -1))
        heapq.heapify(heap)
        src_cluster = {s: int(label[s]) for s in chosen.tolist()}
        while heap:
            time, s, x, d, p = heapq.heappop(heap)
            if x != s:
                if label[x] >= 0:
                    continue
                label[x] = src_cluster[s]
                parent[x] = p
                depth[x] = d
            if d < limit[s]:
                for y in nbrs[x]:
                    if alive[y] and label[y] < 0:
                        heapq.heappush(heap, (time + 1, s, y, d + 1, x))
        rounds += max_delay + max(0, math.ceil(rho * (1 - (t - 1) / (2 * lg))))
        remaining = np.nonzero(label < 0)[0]
    assert remaining.size == 0, "split_graph left nodes unclustered"
    return Clustering(label, sources, parent, depth, rounds)


@dataclass
class PartitionResult:
    clustering: Clustering
    restarts: int
    accepted: bool


class RestartCapExceeded(RuntimeError):
    pass


def over_split_classes(clustering: Clustering, edges: Sequence[tuple[int, int, int]],
                       rho: float, N: int, c_split: float = C_SPLIT) -> list[int]:
    """Classes with more than c_split*|E_i|*log N/rho edges cut.

    ``edges`` holds (x, y, class) triples.
    """
    lab = clustering.labels
    total: dict[int, int] = {}
    cut: dict[int, int] = {}
    for x, y, c in edges:
        total[c] = total.get(c, 0) + 1
        if lab[x] != lab[y]:
            cut[c] = cut.get(c, 0) + 1
    lg = _log_n(N)
    return sorted(c for c in total if cut.get(c, 0) > c_split * total[c] * lg / rho)


def partition(nbrs: Sequence[Sequence[int]], edges: Sequence[tuple[int, int, int]], rho: float,
              rng: np.random.Generator, c_split: float = C_SPLIT, restart_cap: int | None = None,
              strict: bool = False, c_source: float = C_SOURCE) -> PartitionResult:
    """Split the graph, restarting while some class is over-split."""
    N = len(nbrs)
    cap = restart_cap if restart_cap is not None else 64 * math.ceil(_log_n(N))
    rounds = 0
    best = None
    for attempt in range(cap + 1):
        cl = split_graph(nbrs, rho, rng, c_source)
        rounds += cl.rounds
        bad = over_split_classes(cl, edges, rho, N, c_split)
        if not bad:
            cl.rounds = rounds
            return PartitionResult(cl, attempt, True)
        if best is None or len(bad) < best[0]:
            best = (len(bad), cl)
    if strict:
        raise RestartCapExceeded(f"partition still over-split after {cap} restarts")
    cl = best[1]
    cl.rounds = rounds
    return PartitionResult(cl, cap, False)


# ---------------------------------------------------------------- spanning trees


@dataclass
class SpanningTreeResult:
    N: int
    edges: np.ndarray  # multigraph edge indices in the tree
    root: int
    parent: np.ndarray  # node -> parent node, -1 at root
    parent_edge: np.ndarray  # node -> multigraph edge index to parent, -1 at root
    order: np.ndarray  # BFS order from the root
    stretch: float | None = None
    rounds: int = 0
    restarts: int = 0
    info: dict = field(default_factory=dict)

    @property
    def depth(self) -> np.ndarray:
        d = np.zeros(self.N, dtype=np.int64)
        for x in self.order[1:].tolist():
            d[x] = d[self.parent[x]] + 1
        return d


def orient_tree(N: int, a: np.ndarray, b: np.ndarray, tree_edges: Sequence[int], root: int = 0):
    """Root a spanning tree given as edge indices; returns parent, parent_edge, order."""
    inc: list[list[tuple[int, int]]] = [[] for _ in range(N)]
    for k in tree_edges:
        x, y = int(a[k]), int(b[k])
        inc[x].append((y, k))
        inc[y].append((x, k))
    parent = np.full(N, -1, dtype=np.int64)
    pedge = np.full(N, -1, dtype=np.int64)
    seen = np.zeros(N, dtype=bool)
    seen[root] = True
    order = [root]
    i = 0
    while i < len(order):
        x = order[i]
        i += 1
        for y, k in sorted(inc[x]):
            if not seen[y]:
                seen[y] = True
                parent[y] = x
                pedge[y] = k
                order.append(y)
    if len(order) != N:
        raise ValueError("tree edges do not span the graph")
    return parent, pedge, np.asarray(order, dtype=np.int64)


def make_tree(mg: Multigraph, tree_edges: Sequence[int], root: int = 0) -> SpanningTreeResult:
    tree_edges = sorted(int(k) for k in tree_edges)
    if len(tree_edges) != mg.N - 1:
        raise ValueError(f"a spanning tree on {mg.N} nodes needs {mg.N - 1} edges")
    parent, pedge, order = orient_tree(mg.N, mg.a, mg.b, tree_edges, root)
    return SpanningTreeResult(mg.N, np.asarray(tree_edges, dtype=np.int64), root, parent, pedge, order)


def length_classes(lengths: np.ndarray, z: float) -> np.ndarray:
    """Class i (1-based) holds lengths in [z^(i-1), z^i)."""
    cls = np.ones(lengths.shape[0], dtype=np.int64)
    bound = float(z)
    rest = lengths >= bound
    while np.any(rest):
        cls[rest] += 1
        bound *= z
        rest = lengths >= bound
    return cls


def _akpw_once(mg: Multigraph, lengths: np.ndarray, rng: np.random.Generator, z: float,
               c_split: float, c_source: float) -> tuple[list[int], int, int]:
    N = mg.N
    cls = length_classes(lengths, z)
    comp = np.arange(N, dtype=np.int64)
    rho = max(1.0, z / 4)
    tree: list[int] = []
    rounds = 0
    restarts = 0
    j = 1
    a, b = mg.a, mg.b
    key = list(zip(lengths.tolist(), range(mg.M)))
    guard = 0
    while True:
        labels, K = np.unique(comp, return_inverse=True)
        K_count = labels.size
        if K_count == 1:
            break
        ca, cb = K[a], K[b]
        active = np.nonzero((cls <= j) & (ca != cb))[0]
        best: dict[tuple[int, int], int] = {}
        for k in active.tolist():
            x, y = int(ca[k]), int(cb[k])
            pair = (x, y) if x < y else (y, x)
            cur = best.get(pair)
            if cur is None or key[k] < key[cur]:
                best[pair] = k
        nbrs: list[list[int]] = [[] for _ in range(K_count)]
        for x, y in best:
            nbrs[x].append(y)
            nbrs[y].append(x)
        for lst in nbrs:
            lst.sort()
        class_edges = [(int(ca[k]), int(cb[k]), int(cls[k])) for k in active.tolist()]
        res = partition(nbrs, class_edges, rho, rng, c_split, c_source=c_source)
        rounds += res.clustering.rounds
        restarts += res.restarts
        cl = res.clustering
        for x in range(K_count):
            p = int(cl.parent[x])
            if p >= 0:
                tree.append(best[(x, p) if x < p else (p, x)])
        comp = cl.labels[K]
        j += 1
        guard += 1
        if guard > 64 * (int(cls.max()) + N):
            raise RuntimeError("low-stretch tree construction made no progress")
    return tree, rounds, restarts


def low_stretch_tree(mg: Multigraph, lengths=None, rng: np.random.Generator | None = None,
                     z: float | None = None, c_split: float = C_SPLIT,
                     alpha_cfg: float | None = None, retries: int = STRETCH_RETRIES,
                     ledger: RoundLedger | None = None, round_cost: int = 1,
                     phase: str = "lsst", c_source: float = C_SOURCE) -> SpanningTreeResult:
    """Spanning tree of a connected multigraph with low average stretch.

    If ``alpha_cfg`` is given and the measured stretch exceeds 2*alpha_cfg,
    the construction is resampled up to ``retries`` times and the best tree
    is kept.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    lengths = mg.length if lengths is None else np.asarray(lengths, dtype=float)
    if np.any(lengths <= 0):
        raise ValueError("lengths must be positive")
    if mg.N == 1:
        return make_tree(mg, [])
    z = default_z(mg.N) if z is None else z
    best = None
    total_rounds = 0
    total_restarts = 0
    tries = 0
    for tries in range(1, max(1, retries) + 1):
        edges, rounds, restarts = _akpw_once(mg, lengths, rng, z, c_split, c_source)
        total_rounds += rounds
        total_restarts += restarts
        t = make_tree(mg, edges)
        t.stretch = average_stretch(mg, t, lengths)
        if best is None or t.stretch < best.stretch:
            best = t
        if alpha_cfg is None or best.stretch <= 2 * alpha_cfg:
            break
    best.rounds = total_rounds * round_cost
    best.restarts = total_restarts
    best.info = {"z": z, "tries": tries}
    if ledger is not None:
        ledger.charge(phase, best.rounds)
    return best


# ---------------------------------------------------------------- stretch


def lca_pairs(tree: SpanningTreeResult, x, y) -> np.ndarray:
    """Lowest common ancestors of the node pairs (x[i], y[i]) by binary lifting."""
    N = tree.N
    parent = tree.parent
    depth = tree.depth
    levels = max(1, int(depth.max()).bit_length()) if N else 1
    up = np.empty((levels, N), dtype=np.int64)
    up[0] = np.where(parent >= 0, parent, np.arange(N))
    for i in range(1, levels):
        up[i] = up[i - 1][up[i - 1]]
    x = np.array(x, dtype=np.int64)
    y = np.array(y, dtype=np.int64)
    swap = depth[x] < depth[y]
    x[swap], y[swap] = y[swap], x[swap]
    diff = depth[x] - depth[y]
    for i in range(levels):
        bit = ((diff >> i) & 1).astype(bool)
        x[bit] = up[i][x[bit]]
    for i in range(levels - 1, -1, -1):
        ne = up[i][x] != up[i][y]
        x[ne] = up[i][x[ne]]
        y[ne] = up[i][y[ne]]
    return np.where(x == y, x, up[0][x])


def tree_distances(mg: Multigraph, tree: SpanningTreeResult, lengths: np.ndarray) -> np.ndarray:
    """Tree-path length between the endpoints of every multigraph edge."""
    dist = np.zeros(tree.N)
    for x in tree.order[1:].tolist():
        dist[x] = dist[tree.parent[x]] + lengths[tree.parent_edge[x]]
    lca = lca_pairs(tree, mg.a, mg.b)
    return dist[mg.a] + dist[mg.b] - 2 * dist[lca]


def average_stretch(mg: Multigraph, tree: SpanningTreeResult, lengths=None,
                    weighted: bool = True) -> float:
    """Capacity-weighted average stretch sum d_T*cap / sum len*cap."""
    lengths = mg.length if lengths is None else np.asarray(lengths, dtype=float)
    if mg.M == 0:
        return 1.0
    d = tree_distances(mg, tree, lengths)
    w = mg.cap if weighted else np.ones(mg.M)
    return float(np.sum(d * w) / np.sum(lengths * w))
