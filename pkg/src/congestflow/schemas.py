"""Request and report models shared by the HTTP service and the CLI."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, Field


class RunConfig(BaseModel):
    seed: int
    epsilon: float = Field(0.1, gt=0, lt=1)
    alpha: float | None = Field(None, gt=0, description="initial solver alpha")
    trees: int | None = Field(None, ge=1)
    beta: int | None = Field(None, ge=2)
    stop_threshold: int | None = Field(None, ge=2)
    budget_words: int = Field(4, ge=1)
    strict_budget: bool = False
    max_iters: int = Field(10**6, ge=1)
    pairs: int = Field(50, ge=1, description="s-t pairs sampled by approx-stats")
    inject_fault: bool = False


class GraphPayload(BaseModel):
    text: str
    format: Literal["dimacs", "json"] = "dimacs"
    name: str = "input"


class SolveRequest(BaseModel):
    graph: GraphPayload
    config: RunConfig


class ApproxStatsRequest(BaseModel):
    graph: GraphPayload
    config: RunConfig


class VerifyRequest(BaseModel):
    graphs: list[GraphPayload] = Field(default_factory=list, description="empty means bundled fixtures")
    config: RunConfig


class PhaseRounds(BaseModel):
    phase: str
    rounds: int
    max_words: int
    violations: int


class SolveReport(BaseModel):
    kind: Literal["solve"] = "solve"
    graph: str
    fingerprint: str
    n: int
    m: int
    source: int
    sink: int
    epsilon: float
    seed: int
    value: float
    congestion: float
    iterations: int
    rescales: int
    alpha: float
    retries: int
    calls: int
    tree_residual: float
    rounds: int
    phases: list[PhaseRounds]
    flow: list[float] | None = None


class TreeStats(BaseModel):
    index: int
    rows: int
    depth: int
    levels: list[dict]
    cut_ratio_max: float
    cut_ratio_mean: float
    cut_violations: int


class ApproxStatsReport(BaseModel):
    kind: Literal["approx-stats"] = "approx-stats"
    graph: str
    fingerprint: str
    n: int
    m: int
    seed: int
    trees: list[TreeStats]
    alpha_cfg: float
    alpha_hat: float
    pairs: int
    lower_violations: int
    cut_checks: int
    cut_violations: int
    rounds: int
    phases: list[PhaseRounds]


class CheckResult(BaseModel):
    graph: str
    check: str
    passed: bool
    detail: dict


class VerifyReport(BaseModel):
    kind: Literal["verify"] = "verify"
    seed: int
    results: list[CheckResult]
    matrix: dict[str, dict[str, bool]]
    passed: bool
