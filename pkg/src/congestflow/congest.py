"""Synchronous round-stepping message-passing simulator with round accounting.

A word is one node id or one bounded number. Every message is a tuple of
words; its size is its length. The default budget is 4 words per edge per
round per direction.
"""

from __future__ import annotations

import json
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .graph import Graph
from .rng import node_stream

DEFAULT_BUDGET = 4
ROUND_CAP = 10**7


class BudgetViolation(RuntimeError):
    pass


class RoundCapExceeded(RuntimeError):
    pass


@dataclass
class PhaseEntry:
    phase: str
    rounds: int = 0
    max_words: int = 0
    violations: int = 0


@dataclass
class RoundLedger:
    budget_words: int = DEFAULT_BUDGET
    strict: bool = False
    round_cap: int = ROUND_CAP  # per run_protocol call, guards against non-termination
    entries: dict[str, PhaseEntry] = field(default_factory=dict)

    def _entry(self, phase: str) -> PhaseEntry:
        if phase not in self.entries:
            self.entries[phase] = PhaseEntry(phase)
        return self.entries[phase]

    def charge(self, phase: str, rounds: int | float) -> None:
        rounds = int(math.ceil(rounds))
        if rounds < 0:
            raise ValueError("rounds must be nonnegative")
        self._entry(phase).rounds += rounds

    def record_message(self, phase: str, words: int) -> None:
        if words < 1:
            raise ValueError("messages carry at least one word")
        entry = self._entry(phase)
        entry.max_words = max(entry.max_words, words)
        if words > self.budget_words:
            entry.violations += 1
            if self.strict:
                raise BudgetViolation(
                    f"{words}-word message exceeds budget {self.budget_words} in {phase}"
                )

    def absorb(self, other: "RoundLedger", prefix: str = "") -> None:
        for e in other.entries.values():
            mine = self._entry(prefix + e.phase)
            mine.rounds += e.rounds
            mine.max_words = max(mine.max_words, e.max_words)
            mine.violations += e.violations

    @property
    def rounds_elapsed(self) -> int:
        return sum(e.rounds for e in self.entries.values())

    @property
    def max_words(self) -> int:
        return max((e.max_words for e in self.entries.values()), default=0)

    @property
    def violations(self) -> int:
        return sum(e.violations for e in self.entries.values())

    def to_json(self) -> list[dict]:
        return [
            {"phase": e.phase, "rounds": e.rounds, "max_words": e.max_words,
             "violations": e.violations}
            for e in self.entries.values()
        ]

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True)


# ---------------------------------------------------------------- protocols


@dataclass
class NodeContext:
    node: int
    neighbors: tuple[int, ...]
    seed: int
    _rng: Any = None

    @property
    def rng(self) -> np.random.Generator:
        if self._rng is None:
            self._rng = node_stream(self.seed, self.node)
        return self._rng


class Protocol:
    """Round-stepped node program.

    Each round every node emits messages from its current state, all
    messages are delivered, and every node updates (possibly with an empty
    inbox). Outputs must compare with ``==`` so progress can be detected.
    """

    name = "protocol"

    def initial(self, ctx: NodeContext) -> Any:
        return None

    def messages(self, ctx: NodeContext, state: Any, rnd: int) -> dict[int, tuple]:
        return {}

    def update(self, ctx: NodeContext, state: Any, inbox: dict[int, tuple], rnd: int) -> Any:
        return state

    def output(self, ctx: NodeContext, state: Any) -> Any:
        return state


def run_protocol(
    neighbors: Sequence[Sequence[int]],
    protocol: Protocol,
    ledger: RoundLedger | None = None,
    seed: int = 0,
    phase: str | None = None,
) -> tuple[list, RoundLedger]:
    """Run ``protocol`` until a round sends no message.

    Charged rounds are the last round in which some node's output changed;
    trailing rounds whose messages change no output are not charged.
    """
    if isinstance(neighbors, Graph):
        neighbors = adjacency_lists(neighbors)
    ledger = RoundLedger() if ledger is None else ledger
    phase = phase or protocol.name
    n = len(neighbors)
    nbr_sets = [frozenset(x) for x in neighbors]
    ctxs = [NodeContext(v, tuple(sorted(neighbors[v])), seed) for v in range(n)]
    states = [protocol.initial(c) for c in ctxs]
    last_progress = 0
    rnd = 0
    while True:
        rnd += 1
        if rnd > ledger.round_cap:
            raise RoundCapExceeded(f"{phase}: no quiescence after {ledger.round_cap} rounds")
        inboxes: list[dict[int, tuple]] = [dict() for _ in range(n)]
        sent = False
        for v in range(n):
            out = protocol.messages(ctxs[v], states[v], rnd)
            for w, payload in out.items():
                if w not in nbr_sets[v]:
                    raise ValueError(f"node {v} sent to non-neighbor {w}")
                payload = tuple(payload)
                ledger.record_message(phase, len(payload))
                inboxes[w][v] = payload
                sent = True
        if not sent:
            break
        for v in range(n):
            new = protocol.update(ctxs[v], states[v], inboxes[v], rnd)
            if protocol.output(ctxs[v], new) != protocol.output(ctxs[v], states[v]):
                last_progress = rnd
            states[v] = new
    ledger.charge(phase, last_progress)
    return [protocol.output(ctxs[v], states[v]) for v in range(n)], ledger


def adjacency_lists(g: Graph) -> list[list[int]]:
    return [sorted({w for w, _ in g.adj[v]}) for v in range(g.n)]


class FloodProtocol(Protocol):
    """Spread one token from ``origin``; output is the round it arrived."""

    name = "flood"

    def __init__(self, origin: int = 0):
        self.origin = origin

    def initial(self, ctx):
        # (arrival round, pending senders to skip, still to forward)
        if ctx.node == self.origin:
            return (0, frozenset(), True)
        return (None, frozenset(), False)

    def messages(self, ctx, state, rnd):
        arrived, skip, pending = state
        if not pending:
            return {}
        return {w: (1,) for w in ctx.neighbors if w not in skip}

    def update(self, ctx, state, inbox, rnd):
        arrived, skip, pending = state
        if arrived is None and inbox:
            return (rnd, frozenset(inbox), True)
        return (arrived, skip, False)

    def output(self, ctx, state):
        return state[0]


class BFSProtocol(Protocol):
    """Layered BFS: parent is the smallest-id neighbor that reached the node first."""

    name = "bfs"

    def __init__(self, root: int = 0):
        self.root = root

    def initial(self, ctx):
        # (depth, parent, forward-now flag)
        if ctx.node == self.root:
            return (0, -1, True)
        return (None, None, False)

    def messages(self, ctx, state, rnd):
        depth, parent, fwd = state
        if not fwd:
            return {}
        return {w: (ctx.node, depth) for w in ctx.neighbors if w != parent}

    def update(self, ctx, state, inbox, rnd):
        depth, parent, fwd = state
        if depth is None and inbox:
            p = min(inbox)
            return (inbox[p][1] + 1, p, True)
        return (depth, parent, False)

    def output(self, ctx, state):
        return state[0], state[1]


# ---------------------------------------------------------------- trees


@dataclass
class RootedTree:
    """Parent pointers over a node set; ``parent[root] == -1``."""

    root: int
    parent: dict[int, int]
    depth_of: dict[int, int] = field(default_factory=dict)

    def __post_init__(self):
        if not self.depth_of:
            self.depth_of = _depths(self.root, self.parent)

    @property
    def nodes(self) -> list[int]:
        return sorted(self.parent)

    @property
    def depth(self) -> int:
        return max(self.depth_of.values(), default=0)

    def children(self) -> dict[int, list[int]]:
        ch: dict[int, list[int]] = {v: [] for v in self.parent}
        for v, p in self.parent.items():
            if p >= 0:
                ch[p].append(v)
        for v in ch:
            ch[v].sort()
        return ch

    def order(self) -> list[int]:
        """Nodes in nondecreasing depth (root first), ties by id."""
        return sorted(self.parent, key=lambda x: (self.depth_of[x], x))


def _depths(root: int, parent: dict[int, int]) -> dict[int, int]:
    if parent.get(root, None) != -1:
        raise ValueError("root must have parent -1")
    children: dict[int, list[int]] = {}
    for v, p in parent.items():
        if p >= 0:
            if p not in parent:
                raise ValueError(f"parent {p} of {v} outside the tree")
            children.setdefault(p, []).append(v)
    depth = {root: 0}
    queue = deque([root])
    while queue:
        x = queue.popleft()
        for y in children.get(x, ()):
            depth[y] = depth[x] + 1
            queue.append(y)
    if len(depth) != len(parent):
        raise ValueError("parent pointers contain a cycle or are disconnected")
    return depth


def bfs_tree(g, root: int, ledger: RoundLedger | None = None, phase: str = "bfs") -> RootedTree:
    """BFS tree: parent is the first discoverer, ties to the smaller id.

    ``g`` is a Graph or a list of neighbor lists. Charges depth rounds.
    """
    nbrs = adjacency_lists(g) if isinstance(g, Graph) else g
    parent = {root: -1}
    depth = {root: 0}
    frontier = [root]
    while frontier:
        nxt: dict[int, int] = {}
        for x in frontier:
            for y in nbrs[x]:
                if y not in parent and (y not in nxt or x < nxt[y]):
                    nxt[y] = x
        for y, p in nxt.items():
            parent[y] = p
            depth[y] = depth[p] + 1
        frontier = sorted(nxt)
    tree = RootedTree(root, parent, depth)
    if ledger is not None:
        ledger.charge(phase, tree.depth)
    return tree


def pipelined_aggregate(
    tree: RootedTree,
    values: dict[int, Sequence[float]],
    op: Callable[[Any, Any], Any],
    ledger: RoundLedger | None = None,
    phase: str = "aggregate",
    broadcast: bool = True,
) -> list:
    """Aggregate k items up the tree, one item per edge per round.

    Returns the k root aggregates. The convergecast schedule is simulated
    exactly and its length (at most depth + k) is charged, plus the same
    for the broadcast back down when ``broadcast`` is set.
    """
    nodes = tree.order()
    k = len(values[tree.root]) if nodes else 0
    for v in nodes:
        if len(values[v]) != k:
            raise ValueError("every node must supply the same number of items")
    if k == 0:
        return []
    children = tree.children()
    acc = {v: list(values[v]) for v in nodes}
    send: dict[int, list[int]] = {}
    for v in reversed(nodes):
        for c in children[v]:
            for i in range(k):
                acc[v][i] = op(acc[v][i], acc[c][i])
        if v == tree.root:
            continue
        times = []
        prev = 0
        for i in range(k):
            ready = max((send[c][i] for c in children[v]), default=0)
            t = max(ready + 1, prev + 1)
            times.append(t)
            prev = t
        send[v] = times
    up = max((send[c][-1] for c in children[tree.root]), default=0)
    if ledger is not None:
        for _ in range(k):
            ledger.record_message(phase, 2)  # (item index, value)
        ledger.charge(phase, up)
        if broadcast:
            ledger.charge(phase + ":down", tree.depth + k - 1 if tree.depth else 0)
    return acc[tree.root]
