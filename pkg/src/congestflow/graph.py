"""Undirected capacitated graphs, demands, flows and cuts.

Edges carry a fixed orientation u -> v with u < v. Flows are signed per-edge
values on that orientation; ``excess`` is inflow minus outflow per node.
"""

from __future__ import annotations

import io
import json
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised for malformed or invalid graph input."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class DuplicateEdgeWarning(UserWarning):
    pass


@dataclass(frozen=True, eq=False)
class Graph:
    n: int
    u: np.ndarray  # int64, u < v
    v: np.ndarray
    cap: np.ndarray  # int64, >= 1
    source: int | None = None
    sink: int | None = None
    adj: tuple = field(init=False, repr=False)

    def __post_init__(self):
        adj: list[list[tuple[int, int]]] = [[] for _ in range(self.n)]
        for e, (a, b) in enumerate(zip(self.u.tolist(), self.v.tolist())):
            adj[a].append((b, e))
            adj[b].append((a, e))
        object.__setattr__(self, "adj", tuple(tuple(x) for x in adj))
        for arr in (self.u, self.v, self.cap):
            arr.setflags(write=False)

    @property
    def m(self) -> int:
        return int(self.u.shape[0])

    def edges(self) -> Iterable[tuple[int, int, int, int]]:
        """Yield (u, v, cap, edge_id)."""
        for e in range(self.m):
            yield int(self.u[e]), int(self.v[e]), int(self.cap[e]), e

    def degree(self, x: int) -> int:
        return len(self.adj[x])

    def fingerprint(self) -> str:
        import hashlib

        h = hashlib.sha256()
        h.update(np.int64(self.n).tobytes())
        for arr in (self.u, self.v, self.cap):
            h.update(np.ascontiguousarray(arr, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def make_graph(
    n: int,
    edges: Sequence[tuple[int, int, int]],
    source: int | None = None,
    sink: int | None = None,
    cap_bound: float | None = None,
    require_connected: bool = True,
) -> Graph:
    """Validate and build a top-level graph.

    Parallel edges are merged by summing capacity (with a warning),
    self-loops are rejected, and endpoints are reordered so u < v.
    """
    if n < 1:
        raise GraphError("graph needs at least one node")
    merged: dict[tuple[int, int], int] = {}
    for a, b, c in edges:
        a, b, c = int(a), int(b), int(c)
        if not (0 <= a < n and 0 <= b < n):
            raise GraphError(f"edge ({a},{b}) has an endpoint outside [0,{n})")
        if a == b:
            raise GraphError(f"self-loop at node {a}")
        if c < 1:
            raise GraphError(f"edge ({a},{b}) has capacity {c} < 1")
        key = (min(a, b), max(a, b))
        if key in merged:
            warnings.warn(
                f"duplicate edge {key} merged by summing capacity",
                DuplicateEdgeWarning,
                stacklevel=2,
            )
            merged[key] += c
        else:
            merged[key] = c
    bound = float(n) ** 4 if cap_bound is None else cap_bound
    keys = sorted(merged)
    for k in keys:
        if merged[k] > bound:
            raise GraphError(f"edge {k} capacity {merged[k]} exceeds bound {bound:g}")
    u = np.array([k[0] for k in keys], dtype=np.int64)
    v = np.array([k[1] for k in keys], dtype=np.int64)
    cap = np.array([merged[k] for k in keys], dtype=np.int64)
    for name, x in (("source", source), ("sink", sink)):
        if x is not None and not 0 <= x < n:
            raise GraphError(f"{name} {x} outside [0,{n})")
    g = Graph(n, u, v, cap, source, sink)
    if require_connected and not is_connected(g):
        raise GraphError("graph is not connected")
    return g


def is_connected(g: Graph) -> bool:
    seen = [False] * g.n
    seen[0] = True
    stack = [0]
    count = 1
    while stack:
        x = stack.pop()
        for y, _ in g.adj[x]:
            if not seen[y]:
                seen[y] = True
                count += 1
                stack.append(y)
    return count == g.n


def _check_flow(g: Graph, f) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    if f.shape != (g.m,):
        raise ValueError(f"flow has shape {f.shape}, expected ({g.m},)")
    return f


def excess(g: Graph, f) -> np.ndarray:
    """Inflow minus outflow at every node (the B operator)."""
    f = _check_flow(g, f)
    out = np.zeros(g.n)
    np.add.at(out, g.v, f)
    np.subtract.at(out, g.u, f)
    return out


def congestion(g: Graph, f) -> float:
    f = _check_flow(g, f)
    if g.m == 0:
        return 0.0
    return float(np.max(np.abs(f) / g.cap))


def cut_capacity(g: Graph, s: Iterable[int]) -> float:
    mask = node_mask(g.n, s)
    k = int(mask.sum())
    if k == 0 or k == g.n:
        raise ValueError("cut side must be a nonempty proper subset")
    return float(g.cap[mask[g.u] != mask[g.v]].sum())


def node_mask(n: int, s: Iterable[int]) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    idx = np.fromiter((int(x) for x in s), dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise ValueError("cut contains a node outside the graph")
    mask[idx] = True
    return mask


def check_demand(b, n: int, tol: float = 1e-9) -> np.ndarray:
    b = np.asarray(b, dtype=float)
    if b.shape != (n,):
        raise ValueError(f"demand has shape {b.shape}, expected ({n},)")
    if not np.all(np.isfinite(b)):
        raise ValueError("demand has non-finite entries")
    if abs(b.sum()) > tol * max(np.abs(b).sum(), 1e-300):
        raise ValueError("demand does not sum to zero")
    return b


def st_demand(n: int, s: int, t: int, value: float = 1.0) -> np.ndarray:
    b = np.zeros(n)
    b[s] += value
    b[t] -= value
    return b


# ---------------------------------------------------------------- formats


def load_graph(source, fmt: str, cap_bound: float | None = None) -> Graph:
    """Parse a graph from bytes, text, or a binary/text stream."""
    if isinstance(source, (bytes, bytearray)):
        text = source.decode("utf-8")
    elif isinstance(source, str):
        text = source
    else:
        data = source.read()
        text = data.decode("utf-8") if isinstance(data, bytes) else data
    if fmt == "dimacs":
        return _parse_dimacs(text, cap_bound)
    if fmt == "json":
        return _parse_json(text, cap_bound)
    raise GraphError(f"unknown format {fmt!r}")


def _parse_dimacs(text: str, cap_bound):
    n = m = None
    s = t = None
    edges = []
    for lineno, raw in enumerate(io.StringIO(text), start=1):
        line = raw.strip()
        if not line or line[0] == "c":
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "p":
                if n is not None:
                    raise GraphError("second problem line", lineno)
                if len(parts) != 4 or parts[1] != "max":
                    raise GraphError("expected 'p max <n> <m>'", lineno)
                n, m = int(parts[2]), int(parts[3])
                if n < 1 or m < 0:
                    raise GraphError("bad node or arc count", lineno)
            elif tag == "n":
                if n is None:
                    raise GraphError("node line before problem line", lineno)
                if len(parts) != 3 or parts[2] not in ("s", "t"):
                    raise GraphError("expected 'n <id> s|t'", lineno)
                x = int(parts[1]) - 1
                if not 0 <= x < n:
                    raise GraphError(f"node id {x + 1} out of range", lineno)
                if parts[2] == "s":
                    s = x
                else:
                    t = x
            elif tag == "a":
                if n is None:
                    raise GraphError("arc line before problem line", lineno)
                if len(parts) != 4:
                    raise GraphError("expected 'a <u> <v> <cap>'", lineno)
                a, b, c = int(parts[1]) - 1, int(parts[2]) - 1, int(parts[3])
                if not (0 <= a < n and 0 <= b < n):
                    raise GraphError("arc endpoint out of range", lineno)
                if c < 1:
                    raise GraphError(f"capacity {c} < 1", lineno)
                if a == b:
                    raise GraphError("self-loop", lineno)
                edges.append((a, b, c))
            else:
                raise GraphError(f"unknown line tag {tag!r}", lineno)
        except ValueError as exc:
            if isinstance(exc, GraphError):
                raise
            raise GraphError(f"cannot parse {line!r}", lineno) from None
    if n is None:
        raise GraphError("missing problem line")
    if m is not None and len(edges) != m:
        raise GraphError(f"header declares {m} arcs, found {len(edges)}")
    return make_graph(n, edges, s, t, cap_bound)


def _parse_json(text: str, cap_bound):
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise GraphError(exc.msg, exc.lineno) from None
    try:
        n = int(doc["nodes"])
        edges = [(int(e["u"]), int(e["v"]), int(e["cap"])) for e in doc["edges"]]
    except (KeyError, TypeError, ValueError) as exc:
        raise GraphError(f"bad graph document: {exc}") from None
    s = doc.get("source")
    t = doc.get("sink")
    return make_graph(
        n, edges, None if s is None else int(s), None if t is None else int(t), cap_bound
    )


def dump_dimacs(g: Graph) -> str:
    lines = [f"p max {g.n} {g.m}"]
    if g.source is not None:
        lines.append(f"n {g.source + 1} s")
    if g.sink is not None:
        lines.append(f"n {g.sink + 1} t")
    for a, b, c, _ in g.edges():
        lines.append(f"a {a + 1} {b + 1} {c}")
    return "\n".join(lines) + "\n"


def dump_json(g: Graph) -> str:
    doc = {
        "nodes": g.n,
        "edges": [{"u": a, "v": b, "cap": c} for a, b, c, _ in g.edges()],
        "source": g.source,
        "sink": g.sink,
    }
    return json.dumps(doc, sort_keys=True)
