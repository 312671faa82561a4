"""Gradient descent on a soft-max potential and the max-flow driver.

The potential is phi(f) = smax(f / cap) + smax(2 alpha R (b - B f)). Its
gradient needs one apply_R and one apply_Rt per step. ``almost_route``
returns a flow whose residual is small in the R-norm; ``max_flow`` calls it
once at the requested accuracy and then on the residual at accuracy 1/2
(log m times), and finally routes what is left over a maximum-capacity
spanning tree, which makes conservation exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import minimum_spanning_tree

from .approximator import ApproxParams, CongestionApproximator, apply_R, apply_Rt, build_approximator
from .congest import RoundLedger
from .graph import Graph, check_demand, st_demand

ITER_CAP = 10**6
ALPHA_START = 2.0
MAX_DOUBLINGS = 5
RESIDUAL_DECAY = 0.5
NUMERIC_FLOOR = 1e-12


class RetriesExhausted(RuntimeError):
    pass


def soft_max(y) -> float:
    """log sum_i (e^{y_i} + e^{-y_i}), evaluated with a max shift."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise ValueError("soft_max of an empty vector")
    a = float(np.max(np.abs(y)))
    return a + math.log(float(np.sum(np.exp(y - a) + np.exp(-y - a))))


def _soft_sign(y: np.ndarray) -> np.ndarray:
    """(e^{y} - e^{-y}) / sum(e^{y} + e^{-y}): the gradient of soft_max."""
    a = float(np.max(np.abs(y)))
    p = np.exp(y - a)
    q = np.exp(-y - a)
    return (p - q) / float(np.sum(p + q))


def incidence(g: Graph) -> sp.csr_matrix:
    """Sparse B with (B f)_v = inflow minus outflow at v."""
    m = g.m
    rows = np.concatenate([g.v, g.u])
    cols = np.concatenate([np.arange(m), np.arange(m)])
    vals = np.concatenate([np.ones(m), -np.ones(m)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(g.n, m))


@dataclass
class PotentialState:
    f: np.ndarray
    b: np.ndarray
    alpha: float
    phi: float
    phi1: float
    phi2: float
    x: np.ndarray  # f / cap
    y: np.ndarray  # 2 alpha R (b - B f)
    k_b: float = 1.0
    k_f: float = 1.0


class _Ops:
    def __init__(self, g: Graph, R: CongestionApproximator, ledger: RoundLedger | None):
        self.g = g
        self.R = R
        self.B = incidence(g)
        self.cap = g.cap.astype(float)
        self.ledger = ledger

    def state(self, b, f, alpha) -> PotentialState:
        x = f / self.cap
        y = 2 * alpha * apply_R(self.R, b - self.B @ f, self.ledger)
        p1, p2 = soft_max(x), soft_max(y)
        return PotentialState(f, b, alpha, p1 + p2, p1, p2, x, y)

    def grad(self, st: PotentialState) -> np.ndarray:
        g1 = _soft_sign(st.x) / self.cap
        pi = apply_Rt(self.R, 2 * st.alpha * _soft_sign(st.y), self.ledger)
        # d phi2 / d f_e = pi_u - pi_v for e = (u, v) under inflow-minus-outflow excess
        return g1 + pi[self.g.u] - pi[self.g.v]


def potential(g: Graph, R: CongestionApproximator, b, f, alpha: float):
    """(phi, phi1, phi2, y) for flow f and demand b."""
    st = _Ops(g, R, None).state(np.asarray(b, float), np.asarray(f, float), alpha)
    return st.phi, st.phi1, st.phi2, st.y


def grad_potential(g: Graph, R: CongestionApproximator, b, f, alpha: float) -> np.ndarray:
    ops = _Ops(g, R, None)
    return ops.grad(ops.state(np.asarray(b, float), np.asarray(f, float), alpha))


@dataclass
class RouteInfo:
    iterations: int = 0
    rescales: int = 0
    stalled: bool = False
    short_steps: int = 0  # steps that needed less than the nominal step size
    phi_trace: list[tuple[float, float]] = field(default_factory=list)


def almost_route(g: Graph, R: CongestionApproximator, b, eps: float, alpha: float,
                 max_iters: int = ITER_CAP, ledger: RoundLedger | None = None,
                 monitor: Callable[[float, float], None] | None = None,
                 log_base: str = "e") -> tuple[np.ndarray, RouteInfo]:
    """Flow whose residual demand is small relative to the approximator.

    Demand is scaled so that 2 alpha ||Rb|| = 16 ln(n) / eps; flow and demand
    grow by 17/16 while phi is below 16 ln(n) / eps; each step moves every
    edge by cap * t against the gradient sign. The step t starts from the
    nominal delta / (1 + 4 alpha^2), may grow while a sufficient-decrease
    test passes, and shrinks below nominal only when the nominal step would
    increase phi (a sign that alpha is too small; the run is then flagged).
    ``monitor`` sees (phi before, phi after) for every update.
    """
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    b = check_demand(b, g.n, tol=1e-7)
    info = RouteInfo()
    ops = _Ops(g, R, ledger)
    m = g.m
    n = g.n
    L = math.log(n) if log_base == "e" else math.log2(n)
    L = max(L, math.log(2))
    Rb = apply_R(R, b, ledger)
    nb = float(np.max(np.abs(Rb))) if Rb.size else 0.0
    if nb == 0.0:
        return np.zeros(m), info
    k_b = (16 * L / eps) / (2 * alpha * nb)
    bs = b * k_b
    f = np.zeros(m)
    k_f = 1.0
    target = 16 * L / eps
    cap = ops.cap
    st = ops.state(bs, f, alpha)
    t_prev = None
    while True:
        while st.phi < target:
            f = f * (17 / 16)
            bs = bs * (17 / 16)
            k_f *= 17 / 16
            info.rescales += 1
            st = ops.state(bs, f, alpha)
            t_prev = None
        gr = ops.grad(st)
        delta = float(np.sum(np.abs(cap * gr)))
        if delta < eps / 4:
            break
        if info.iterations >= max_iters:
            info.stalled = True
            break
        base = delta / (1 + 4 * alpha**2)
        d = -np.sign(gr) * cap
        t = base if t_prev is None else max(base, 2 * t_prev)
        cand = None
        while True:
            trial = ops.state(bs, f + t * d, alpha)
            if t > base:
                if trial.phi <= st.phi - 0.5 * t * delta:
                    cand = trial
                    break
                t = max(base, t / 2)
                continue
            if trial.phi <= st.phi:
                cand = trial
                info.short_steps += t < base
                break
            t /= 2
            if t < base * 1e-12:
                break
        if cand is None:
            # no descent at any tested step: alpha is too small for this instance
            info.stalled = True
            break
        if monitor is not None:
            monitor(st.phi, cand.phi)
        f = cand.f
        st = cand
        t_prev = t
        info.iterations += 1
    return f / (k_b * k_f), info


def route_on_tree(g: Graph, parent: np.ndarray, parent_edge: np.ndarray, order, b) -> np.ndarray:
    """Route b over a rooted spanning tree: the edge above v carries the
    demand summed over v's subtree."""
    b = np.asarray(b, dtype=float)
    acc = b.copy()
    f = np.zeros(g.m)
    for v in reversed(list(order)):
        p = parent[v]
        if p < 0:
            continue
        e = parent_edge[v]
        # net inflow into v's subtree must equal its demand sum
        f[e] = acc[v] if g.v[e] == v else -acc[v]
        acc[p] += acc[v]
    return f


def max_weight_spanning_tree(g: Graph, root: int = 0):
    """Maximum-capacity spanning tree as (parent, parent_edge, order)."""
    w = g.cap.max() + 1.0 - g.cap  # positive, order-reversing
    mat = sp.csr_matrix((w, (g.u, g.v)), shape=(g.n, g.n))
    t = minimum_spanning_tree(mat).tocoo()
    eid = {(int(a), int(c)): k for k, (a, c, _, _) in enumerate(g.edges())}
    adj: list[list[tuple[int, int]]] = [[] for _ in range(g.n)]
    for a, c in zip(t.row.tolist(), t.col.tolist()):
        x, y = min(a, c), max(a, c)
        k = eid[(x, y)]
        adj[x].append((y, k))
        adj[y].append((x, k))
    parent = np.full(g.n, -1, dtype=np.int64)
    pedge = np.full(g.n, -1, dtype=np.int64)
    order = [root]
    seen = {root}
    i = 0
    while i < len(order):
        x = order[i]
        i += 1
        for y, k in sorted(adj[x]):
            if y not in seen:
                seen.add(y)
                parent[y] = x
                pedge[y] = k
                order.append(y)
    if len(order) != g.n:
        raise ValueError("graph is not connected")
    return parent, pedge, order


@dataclass
class FlowResult:
    flow: np.ndarray  # scaled to congestion 1
    value: float
    congestion: float
    demand_value: float
    iterations: int
    rescales: int
    alpha: float
    retries: int
    calls: int
    tree_residual: float  # l1 norm of the demand left for the tree
    stalled: bool
    ledger: RoundLedger

    def report(self) -> dict:
        return {
            "value": self.value,
            "congestion": self.congestion,
            "iterations": self.iterations,
            "rescales": self.rescales,
            "alpha": self.alpha,
            "retries": self.retries,
            "calls": self.calls,
            "tree_residual": self.tree_residual,
            "rounds": self.ledger.rounds_elapsed,
            "phases": self.ledger.to_json(),
        }


def _scale_to_unit(f: np.ndarray, cap: np.ndarray) -> tuple[np.ndarray, float]:
    """Scale f to congestion 1; the most congested edge is pinned to exactly
    its capacity (a change of at most one ulp on that edge)."""
    ratio = np.abs(f) / cap
    e = int(np.argmax(ratio))
    c = float(cap[e] / abs(f[e]))
    out = f * c
    out[e] = math.copysign(cap[e], f[e])
    over = np.abs(out) > cap
    out[over] = np.sign(out[over]) * cap[over]
    return out, c


def max_flow(g: Graph, s: int, t: int, eps: float = 0.1, seed: int = 0,
             params: ApproxParams | None = None, R: CongestionApproximator | None = None,
             alpha: float | None = None, max_iters: int = ITER_CAP,
             ledger: RoundLedger | None = None,
             monitor: Callable[[float, float], None] | None = None) -> FlowResult:
    """Approximate maximum s-t flow.

    One unit of s-t demand is routed (first call at ``eps``, then log2(m)
    calls at 1/2 on the residual, then the spanning tree), and the total
    flow is scaled to congestion 1, so the value is 1/congestion. If a call
    stalls or fails to halve the residual, the solver alpha doubles and the
    whole run restarts, at most five times.
    """
    if s == t:
        raise ValueError("source and sink must differ")
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    ledger = RoundLedger() if ledger is None else ledger
    params = (params or ApproxParams()).resolved(g.n)
    if R is None:
        R = build_approximator(g, seed=seed, params=params, ledger=ledger)
    alpha0 = ALPHA_START if alpha is None else float(alpha)
    # excess is inflow minus outflow, so an s -> t flow meets +1 at t and -1 at s
    b = st_demand(g.n, t, s, 1.0)
    B = incidence(g)
    calls = 1 + max(1, math.ceil(math.log2(max(g.m, 2))))
    cap = g.cap.astype(float)
    iters = rescales = 0
    retries = 0
    total = None
    stalled = False
    for retries in range(MAX_DOUBLINGS + 1):
        a = alpha0 * 2**retries
        total = np.zeros(g.m)
        res = b.copy()
        prev = float(np.max(np.abs(apply_R(R, res))))
        floor = prev * NUMERIC_FLOOR
        stalled = False
        for i in range(calls):
            res = res - res.mean()  # cancellation leaves a tiny nonzero sum
            f, info = almost_route(g, R, res, eps if i == 0 else 0.5, a, max_iters, ledger, monitor)
            iters += info.iterations
            rescales += info.rescales
            total += f
            res = b - B @ total
            cur = float(np.max(np.abs(apply_R(R, res))))
            if info.stalled or (i > 0 and cur > floor and cur > RESIDUAL_DECAY * prev):
                stalled = True
                break
            prev = cur
            if cur <= floor:
                break  # further calls only chase rounding error
        if not stalled:
            break
    if stalled:
        raise RetriesExhausted(f"no clean run after {MAX_DOUBLINGS} alpha doublings")
    parent, pedge, order = max_weight_spanning_tree(g, s)
    res = b - B @ total
    total = total + route_on_tree(g, parent, pedge, order, res)
    tree_res = float(np.sum(np.abs(res)))
    ledger.charge("tree-route", 2 * _tree_depth(parent, order))
    scaled, c = _scale_to_unit(total, cap)
    value = c  # one unit of demand times the scale factor
    cong = float(np.max(np.abs(scaled) / cap))
    return FlowResult(scaled, float(value), cong, 1.0, iters, rescales, a, retries, calls,
                      tree_res, stalled, ledger)


def _tree_depth(parent: np.ndarray, order) -> int:
    d = {}
    for v in order:
        p = parent[v]
        d[v] = 0 if p < 0 else d[p] + 1
    return max(d.values(), default=0)
