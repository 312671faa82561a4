"""Baswana-Sen spanners, iterated spanner-plus-sampling sparsification, and
bounded out-degree edge orientation on cluster multigraphs."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .cluster import Multigraph

C_SP = 1.0
C_K = 3
C_SZ = 4.0


def _clog(N: int) -> int:
    return max(1, math.ceil(math.log2(max(N, 2))))


def bs_spanner(mg: Multigraph, weights=None, rng: np.random.Generator | None = None,
               edges=None) -> np.ndarray:
    """Edge indices of a Baswana-Sen spanner with stretch 2*ceil(log2 N) - 1.

    ``edges`` restricts the input to a subset of edge indices. Ties between
    equal weights go to the smaller edge index.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    w = mg.cap ** -1.0 if weights is None else np.asarray(weights, dtype=float)
    N = mg.N
    pool = np.arange(mg.M) if edges is None else np.asarray(edges, dtype=np.int64)
    a, b = mg.a.tolist(), mg.b.tolist()
    wl = w.tolist()
    # live incidence: node -> {edge index}
    live: list[set[int]] = [set() for _ in range(N)]
    for k in pool.tolist():
        live[a[k]].add(k)
        live[b[k]].add(k)
    center = list(range(N))  # cluster id (its center) per node, -1 once dropped
    spanner: set[int] = set()

    def other(k, v):
        return b[k] if a[k] == v else a[k]

    def drop(k):
        live[a[k]].discard(k)
        live[b[k]].discard(k)

    def lightest_by_cluster(v):
        best: dict[int, int] = {}
        for k in live[v]:
            c = center[other(k, v)]
            if c < 0:
                continue
            cur = best.get(c)
            if cur is None or (wl[k], k) < (wl[cur], cur):
                best[c] = k
        return best

    phases = _clog(N) - 1
    for _ in range(phases):
        centers = sorted({c for c in center if c >= 0})
        marked = {c for c in centers if rng.random() < 0.5}
        new_center = list(center)
        removals: list[int] = []
        for v in range(N):
            c = center[v]
            if c < 0 or c in marked:
                continue
            q = lightest_by_cluster(v)
            q.pop(c, None)
            adj_marked = [x for x in q if x in marked]
            if not adj_marked:
                spanner.update(q.values())
                removals.extend(live[v])
                new_center[v] = -1
                continue
            kstar = min((q[x] for x in adj_marked), key=lambda k: (wl[k], k))
            cstar = center[other(kstar, v)]
            new_center[v] = cstar
            spanner.add(kstar)
            for x, k in q.items():
                if (wl[k], k) < (wl[kstar], kstar):
                    spanner.add(k)
                    removals.extend(e for e in live[v] if center[other(e, v)] == x)
            removals.extend(e for e in live[v] if center[other(e, v)] == cstar)
        for k in removals:
            drop(k)
        center = new_center
        for v in range(N):
            for k in list(live[v]):
                u = other(k, v)
                if center[u] >= 0 and center[u] == center[v]:
                    drop(k)
    for v in range(N):
        q = lightest_by_cluster(v)
        q.pop(center[v], None)
        spanner.update(q.values())
    return np.array(sorted(spanner), dtype=np.int64)


@dataclass
class SparsifierOutput:
    graph: Multigraph  # retained edges with reweighted capacities; eid indexes the input
    owner: np.ndarray  # per retained edge, the endpoint that owns (sends on) it
    out_degree: int
    bypassed: bool
    phases: int = 0


def bypass_threshold(N: int) -> int:
    return max(4 * N * _clog(N), 256)


def sparsify(mg: Multigraph, eps: float, rng: np.random.Generator | None = None,
             c_sp: float = C_SP, c_k: int = C_K, c_sz: float = C_SZ) -> SparsifierOutput:
    """Cut sparsifier by repeated spanner peeling and 1/4 sampling.

    Small inputs (at most ``bypass_threshold`` edges) are returned unchanged.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    rng = np.random.default_rng(0) if rng is None else rng
    N = mg.N
    target = bypass_threshold(N)
    if mg.M <= target:
        out = Multigraph(N, mg.a, mg.b, mg.cap, mg.length, mg.eid)
        owner, deg = orient_edges(out)
        return SparsifierOutput(out, owner, deg, True, 0)
    lg = math.log2(max(N, 2))
    phases = math.ceil(c_sp * lg * lg / eps**2)
    idx = np.arange(mg.M)
    cap = mg.cap.astype(float).copy()
    done = 0
    for done in range(1, phases + 1):
        keep = np.zeros(mg.M, dtype=bool)
        avail = np.zeros(mg.M, dtype=bool)
        avail[idx] = True
        for _ in range(c_k * _clog(N)):
            pool = np.nonzero(avail & ~keep)[0]
            if pool.size == 0:
                break
            sp = bs_spanner(mg, 1.0 / np.maximum(cap, 1e-300), rng, pool)
            keep[sp] = True
        rest = np.nonzero(avail & ~keep)[0]
        coin = rng.random(rest.size) < 0.25
        cap[rest[coin]] *= 4.0
        idx = np.sort(np.concatenate([np.nonzero(keep)[0], rest[coin]]))
        if idx.size <= target:
            break
    bound = N * (c_sz / eps * lg) ** 3
    assert idx.size <= bound, "sparsifier output exceeds its size bound"
    out = Multigraph(N, mg.a[idx], mg.b[idx], cap[idx], mg.length[idx], mg.eid[idx])
    owner, deg = orient_edges(out)
    return SparsifierOutput(out, owner, deg, False, done)


def orient_edges(mg: Multigraph) -> tuple[np.ndarray, int]:
    """Orient every edge so that low-degree clusters own their edges.

    For ceil(log2 N) rounds, every active cluster with fewer than 2*d_avg
    unoriented edges takes all of them as outgoing and halts. Edges still
    unoriented afterwards go to the endpoint with fewer unoriented edges.
    Returns (owner per edge, maximum out-degree).
    """
    N, M = mg.N, mg.M
    owner = np.full(M, -1, dtype=np.int64)
    if M == 0:
        return owner, 0
    d_avg = 2 * M / N
    inc: list[list[int]] = [[] for _ in range(N)]
    for k, (x, y) in enumerate(zip(mg.a.tolist(), mg.b.tolist())):
        inc[x].append(k)
        inc[y].append(k)
    active = [True] * N
    for _ in range(_clog(N)):
        free = [[k for k in inc[v] if owner[k] < 0] for v in range(N)]
        movers = [v for v in range(N) if active[v] and len(free[v]) < 2 * d_avg]
        if not movers:
            break
        for v in movers:  # ascending id: shared edges go to the smaller id
            for k in free[v]:
                if owner[k] < 0:
                    owner[k] = v
            active[v] = False
    rest = np.nonzero(owner < 0)[0]
    if rest.size:
        free_deg = np.zeros(N, dtype=np.int64)
        np.add.at(free_deg, mg.a[rest], 1)
        np.add.at(free_deg, mg.b[rest], 1)
        for k in rest.tolist():
            x, y = int(mg.a[k]), int(mg.b[k])
            owner[k] = x if (free_deg[x], x) <= (free_deg[y], y) else y
    out = np.bincount(owner, minlength=N)
    return owner, int(out.max())
