"""HTTP service around the solver, plus the core handlers it calls.

The handlers are plain functions returning pydantic reports, so tests and the
CLI can drive them in-process through the ASGI app. Reports carry no timing
information; identical (input, config) pairs give identical JSON.
"""

from __future__ import annotations

import dataclasses
import json
from importlib import resources

import numpy as np
from fastapi import FastAPI, HTTPException

from . import oracles
from .approximator import ApproxParams, apply_R, build_approximator
from .cluster import (ClusterGraph, MinIdFlood, NearestIds, NeighborhoodSum, contract,
                      run_cluster_direct, simulate_on_network, singleton_cluster_graph, validate)
from .congest import RoundLedger
from .flow import RetriesExhausted, max_flow
from .graph import Graph, GraphError, cut_capacity, is_connected, load_graph, st_demand
from .jtree import (build_H, build_jtree, sample_removal_set, select_F, skeletonize, tree_flow,
                    verify_embeddings)
from .lsst import low_stretch_tree
from .rng import substream
from .schemas import (ApproxStatsReport, ApproxStatsRequest, CheckResult, GraphPayload, PhaseRounds,
                      RunConfig, SolveReport, SolveRequest, TreeStats, VerifyReport, VerifyRequest)

EMBED_BOUND = 6.0
CHECKS = ("tree-flow", "portal-bound", "embedding-loads", "simulation", "cluster-validity")
FIXTURES = ("cycle10", "grid4x4", "k5", "path8", "random16", "tree12")


class InputError(ValueError):
    pass


def parse_graph(payload: GraphPayload) -> Graph:
    try:
        return load_graph(payload.text, payload.format)
    except GraphError as exc:
        raise InputError(str(exc)) from None


def bundled_fixtures() -> list[GraphPayload]:
    root = resources.files("congestflow") / "fixtures"
    return [GraphPayload(text=(root / f"{name}.dimacs").read_text(), format="dimacs", name=name)
            for name in FIXTURES]


def _params(cfg: RunConfig) -> ApproxParams:
    return ApproxParams(k=cfg.trees, beta=cfg.beta, stop_threshold=cfg.stop_threshold)


def _phases(ledger: RoundLedger) -> list[PhaseRounds]:
    return [PhaseRounds(**e) for e in sorted(ledger.to_json(), key=lambda e: e["phase"])]


def _fingerprint(g: Graph) -> str:
    return oracles.fingerprint(g.n, [(int(a), int(b), int(c)) for a, b, c, _ in g.edges()])


def _require_connected(g: Graph) -> None:
    if g.n < 2:
        raise InputError("graph needs at least two nodes")
    if not is_connected(g):
        raise InputError("graph is not connected")


# ---------------------------------------------------------------- solve


def run_solve(g: Graph, cfg: RunConfig, name: str = "input", with_flow: bool = False) -> SolveReport:
    _require_connected(g)
    if g.source is None or g.sink is None:
        raise InputError("graph does not name a source and a sink")
    ledger = RoundLedger(cfg.budget_words, cfg.strict_budget)
    res = max_flow(g, g.source, g.sink, eps=cfg.epsilon, seed=cfg.seed, params=_params(cfg),
                   alpha=cfg.alpha, max_iters=cfg.max_iters, ledger=ledger)
    body = res.report()
    body["phases"] = _phases(ledger)
    return SolveReport(graph=name, fingerprint=_fingerprint(g), n=g.n, m=g.m, source=g.source,
                       sink=g.sink, epsilon=cfg.epsilon, seed=cfg.seed,
                       flow=res.flow.tolist() if with_flow else None, **body)


# ---------------------------------------------------------------- approximator statistics


def _sample_pairs(n: int, count: int, seed: int) -> list[tuple[int, int]]:
    rng = substream(seed, "cli", "pairs")
    every = [(s, t) for s in range(n) for t in range(s + 1, n)]
    if len(every) <= count:
        return every
    pick = np.sort(rng.choice(len(every), size=count, replace=False))
    return [every[i] for i in pick.tolist()]


def run_approx_stats(g: Graph, cfg: RunConfig, name: str = "input") -> ApproxStatsReport:
    _require_connected(g)
    if g.n > oracles.MAX_FLOW_LIMIT:
        raise InputError(f"approx-stats runs exact oracles and needs n <= {oracles.MAX_FLOW_LIMIT}")
    ledger = RoundLedger(cfg.budget_words, cfg.strict_budget)
    R = build_approximator(g, seed=cfg.seed, params=_params(cfg), ledger=ledger)

    alpha_hat = 0.0
    lower = 0
    pairs = _sample_pairs(g.n, cfg.pairs, cfg.seed)
    for s, t in pairs:
        opt = oracles.st_opt_congestion(g, s, t)
        rb = float(np.max(np.abs(apply_R(R, st_demand(g.n, t, s, 1.0)))))
        if rb > opt * (1 + 1e-9):
            lower += 1
        alpha_hat = max(alpha_hat, opt / rb)

    trees = []
    checks = violations = 0
    for i, vt in enumerate(R.trees):
        ratios = []
        bad = 0
        for x in vt.rows.tolist():
            cut = cut_capacity(g, vt.subtree(x))
            if vt.cap[x] < cut - 1e-9:
                bad += 1
            ratios.append(float(vt.cap[x]) / cut)
        checks += len(ratios)
        violations += bad
        levels = [{"clusters": int(lv.clusters), "j": int(lv.j), "members": int(lv.members),
                   "iterations": int(lv.iterations), "portals": int(lv.portals),
                   "core_edges": int(lv.core_edges), "local": bool(lv.local),
                   "sparsified": bool(lv.sparsified), "covered": bool(lv.covered)}
                  for lv in vt.levels]
        trees.append(TreeStats(index=i, rows=len(ratios), depth=int(vt.depth), levels=levels,
                               cut_ratio_max=max(ratios, default=1.0),
                               cut_ratio_mean=float(np.mean(ratios)) if ratios else 1.0,
                               cut_violations=bad))
    return ApproxStatsReport(graph=name, fingerprint=_fingerprint(g), n=g.n, m=g.m, seed=cfg.seed,
                             trees=trees, alpha_cfg=R.alpha, alpha_hat=alpha_hat, pairs=len(pairs),
                             lower_violations=lower, cut_checks=checks, cut_violations=violations,
                             rounds=ledger.rounds_elapsed, phases=_phases(ledger))


# ---------------------------------------------------------------- verify


def inject_fault(cg: ClusterGraph) -> ClusterGraph:
    """Give the first leader a parent, which breaks the rooted-tree condition."""
    parent = cg.tree_parent.copy()
    lead = int(cg.leaders[0])
    parent[lead] = (lead + 1) % cg.g.n
    return dataclasses.replace(cg, tree_parent=parent, _cache={})


def _level_edges(mg) -> list[tuple[int, int, float]]:
    return [(int(a), int(b), float(c)) for a, b, c in zip(mg.a.tolist(), mg.b.tolist(), mg.cap.tolist())]


def _check_tree_flow(cg, tree, removal) -> tuple[bool, dict]:
    mg = cg.multigraph()
    brute = oracles.brute_tree_flow(mg.N, _level_edges(mg), tree.edges.tolist())
    worst = 0.0
    for method, rem in (("naive", None), ("decomposed", removal)):
        got = tree_flow(cg, tree, rem, method=method).by_edge()
        worst = max(worst, max((abs(got[k] - v) for k, v in brute.items()), default=0.0))
    return worst == 0.0, {"max_abs_diff": worst, "tree_edges": len(brute)}


def _simulation(cg: ClusterGraph, budget: int) -> tuple[bool, dict]:
    mg = contract(cg)
    detail = {}
    ok = True
    for proto in (MinIdFlood(), NeighborhoodSum(), NearestIds()):
        direct, _ = run_cluster_direct(mg, cg.sizes, proto, budget=budget)
        sim, _ = simulate_on_network(cg, proto, RoundLedger(budget))
        same = direct == sim
        ok = ok and same
        detail[proto.name] = same
    return ok, detail


def verify_graph(g: Graph, cfg: RunConfig, name: str) -> list[CheckResult]:
    _require_connected(g)
    rng = substream(cfg.seed, "verify", name)
    cg = singleton_cluster_graph(g)
    mg = cg.multigraph()
    tree = low_stretch_tree(mg, 1.0 / mg.cap, rng)
    removal = sample_removal_set(cg, tree, rng)
    out = []

    ok, detail = _check_tree_flow(cg, tree, removal)
    out.append(CheckResult(graph=name, check="tree-flow", passed=ok, detail=detail))

    tf = tree_flow(cg, tree)
    j = int(rng.integers(1, max(2, g.n - 1)))
    sel = select_F(tf, j)
    skel = skeletonize(tree, sel.F, tf.flow, j)
    out.append(CheckResult(graph=name, check="portal-bound", passed=len(skel.portals) < 4 * j,
                           detail={"portals": len(skel.portals), "j": j, "F": len(sel.F)}))

    h = build_H(cg, tree, sel.F, tf)
    jt = build_jtree(cg, h, skel, tf, cluster_graph=cg)
    to_j, to_h = verify_embeddings(h, jt, tf)
    out.append(CheckResult(graph=name, check="embedding-loads",
                           passed=to_j <= EMBED_BOUND and to_h <= EMBED_BOUND,
                           detail={"h_to_j": to_j, "j_to_h": to_h, "bound": EMBED_BOUND}))

    nxt = jt.next_cg
    ok, detail = _simulation(nxt, cfg.budget_words)
    detail["clusters"] = nxt.N
    out.append(CheckResult(graph=name, check="simulation", passed=ok, detail=detail))

    target = inject_fault(nxt) if cfg.inject_fault else nxt
    problems = validate(target)
    out.append(CheckResult(graph=name, check="cluster-validity", passed=not problems,
                           detail={"violations": problems, "injected": cfg.inject_fault}))
    return out


def run_verify(graphs: list[tuple[str, Graph]], cfg: RunConfig) -> VerifyReport:
    results: list[CheckResult] = []
    for name, g in graphs:
        results.extend(verify_graph(g, cfg, name))
    matrix = {c: {r.graph: r.passed for r in results if r.check == c} for c in CHECKS}
    return VerifyReport(seed=cfg.seed, results=results, matrix=matrix,
                        passed=all(r.passed for r in results))


def report_lines(report) -> list[str]:
    """JSON-lines rendering: one line per item, then the report itself."""
    doc = report.model_dump(mode="json", exclude_none=True)
    lines = []
    if isinstance(report, VerifyReport):
        lines = [json.dumps({"kind": "check", **r}, sort_keys=True) for r in doc.pop("results")]
    elif isinstance(report, ApproxStatsReport):
        lines = [json.dumps({"kind": "tree", **t}, sort_keys=True) for t in doc.pop("trees")]
    return lines + [json.dumps(doc, sort_keys=True)]


# ---------------------------------------------------------------- HTTP


app = FastAPI(title="congestflow")


def _guard(fn, *args, **kwargs):
    try:
        return fn(*args, **kwargs)
    except (InputError, GraphError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from None
    except RetriesExhausted as exc:
        raise HTTPException(status_code=409, detail=str(exc)) from None


@app.post("/solve", response_model=SolveReport, response_model_exclude_none=True)
def solve_endpoint(req: SolveRequest, flow: bool = False) -> SolveReport:
    return _guard(lambda: run_solve(parse_graph(req.graph), req.config, req.graph.name, flow))


@app.post("/approx-stats", response_model=ApproxStatsReport)
def approx_stats_endpoint(req: ApproxStatsRequest) -> ApproxStatsReport:
    return _guard(lambda: run_approx_stats(parse_graph(req.graph), req.config, req.graph.name))


@app.post("/verify", response_model=VerifyReport)
def verify_endpoint(req: VerifyRequest) -> VerifyReport:
    payloads = req.graphs or bundled_fixtures()
    return _guard(lambda: run_verify([(p.name, parse_graph(p)) for p in payloads], req.config))


@app.get("/health")
def health() -> dict:
    return {"status": "ok"}
