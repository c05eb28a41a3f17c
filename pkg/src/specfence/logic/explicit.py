"""Explicit-state reachability oracle.

Breadth-first exploration over concrete states of a TransitionSystem:
attacker inputs are enumerated at Init, branch-choice and havoc inputs at
each step.  Guarded updates compile to Python closures over a positional
state tuple, which keeps the oracle usable up to ~2^20 states.  Used as the
independent ground truth for engine verdicts and trace shapes.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Callable

from specfence.logic import formula as F


class BudgetExceeded(Exception):
    def __init__(self, budget: int):
        super().__init__(f"state budget {budget} exceeded")
        self.budget = budget


DEFAULT_STATE_BUDGET = 1 << 20


def _mask(w: int) -> int:
    return (1 << w) - 1


def compile_node(node: F.Node, src_of: dict[str, str]) -> str:
    """Python expression source for a formula/term over named value sources."""
    def go(n: F.Node) -> str:
        op = n.op
        if op == "true":
            return "True"
        if op == "false":
            return "False"
        if op in ("var", "bvar"):
            return src_of[n.aux]
        if op == "const":
            return str(n.aux)
        a = n.args
        if op == "add":
            return f"(({go(a[0])} + {go(a[1])}) & {_mask(n.width)})"
        if op == "sub":
            return f"(({go(a[0])} - {go(a[1])}) & {_mask(n.width)})"
        if op == "mul":
            return f"(({go(a[0])} * {go(a[1])}) & {_mask(n.width)})"
        if op == "band":
            return f"({go(a[0])} & {go(a[1])})"
        if op == "bor":
            return f"({go(a[0])} | {go(a[1])})"
        if op == "bxor":
            return f"({go(a[0])} ^ {go(a[1])})"
        if op == "bnot":
            return f"((~{go(a[0])}) & {_mask(n.width)})"
        if op == "ite":
            return f"({go(a[1])} if {go(a[0])} else {go(a[2])})"
        if op == "zext":
            return go(a[0])
        if op == "trunc":
            return f"({go(a[0])} & {_mask(n.width)})"
        if op == "eq":
            return f"({go(a[0])} == {go(a[1])})"
        if op == "ult":
            return f"({go(a[0])} < {go(a[1])})"
        if op == "ule":
            return f"({go(a[0])} <= {go(a[1])})"
        if op == "not":
            return f"(not {go(a[0])})"
        if op == "and":
            return "(" + " and ".join(go(x) for x in n.args) + ")"
        if op == "or":
            return "(" + " or ".join(go(x) for x in n.args) + ")"
        if op == "iff":
            return f"(bool({go(a[0])}) == bool({go(a[1])}))"
        raise AssertionError(op)

    return go(node)


@dataclass
class CompiledUpdate:
    guard: Callable
    step: Callable  # (state_tuple, input_tuple) -> state_tuple
    input_names: tuple[str, ...]
    input_widths: tuple[int, ...]
    pc_code: int | None
    tag: str


class CompiledTs:
    """Positional-tuple evaluator for one transition system."""

    def __init__(self, ts):
        self.ts = ts
        self.names = tuple(v.name for v in ts.state_vars)
        self.widths = tuple(v.width for v in ts.state_vars)
        self.index = {n: i for i, n in enumerate(self.names)}
        self.pc_index = self.index["pc"]
        self.spec_index = self.index.get("spec")

        self.updates: list[CompiledUpdate] = []
        for u in ts.updates:
            src_of = {n: f"s[{i}]" for n, i in self.index.items()}
            for j, iv in enumerate(u.inputs):
                src_of[iv.name] = f"x[{j}]"
            guard_src = compile_node(u.guard, src_of)
            assigned = dict(u.assigns)
            parts = []
            for i, name in enumerate(self.names):
                node = assigned.get(name)
                parts.append(compile_node(node, src_of) if node is not None else f"s[{i}]")
            step_src = f"lambda s, x: ({', '.join(parts)},)" if len(parts) != 1 \
                else f"lambda s, x: ({parts[0]},)"
            self.updates.append(CompiledUpdate(
                eval(f"lambda s: {guard_src}"),  # noqa: S307 - generated from our own AST
                eval(step_src),
                tuple(iv.name for iv in u.inputs),
                tuple(iv.width for iv in u.inputs),
                u.pc_code, u.tag))

        self.by_code: dict[int, list[CompiledUpdate]] = {}
        self.global_updates: list[CompiledUpdate] = []
        for cu in self.updates:
            if cu.pc_code is None:
                self.global_updates.append(cu)
            else:
                self.by_code.setdefault(cu.pc_code, []).append(cu)

        src_of = {n: f"s[{i}]" for n, i in self.index.items()}
        self.bad = eval(f"lambda s: {compile_node(ts.bad, src_of)}")  # noqa: S307

    # -- conversions

    def env_of(self, s: tuple) -> dict[str, int]:
        return dict(zip(self.names, s))

    def tuple_of(self, env: dict[str, int]) -> tuple:
        return tuple(env[n] for n in self.names)

    # -- stepping

    def initial_states(self, budget: int | None = None):
        base = dict(self.ts.init_fixed)
        free = list(self.ts.init_free)
        widths = dict(zip(self.names, self.widths))
        total = 1
        for name in free:
            total *= 1 << widths[name]
            if budget is not None and total > budget:
                raise BudgetExceeded(budget)
        for combo in itertools.product(*(range(1 << widths[n]) for n in free)):
            env = dict(base)
            env.update(zip(free, combo))
            yield self.tuple_of(env)

    def firing_updates(self, s: tuple) -> list[CompiledUpdate]:
        cands = self.by_code.get(s[self.pc_index], []) + self.global_updates
        return [cu for cu in cands if cu.guard(s)]

    def successors(self, s: tuple) -> list[tuple]:
        """All one-step successors, deterministic order, duplicates removed."""
        out = []
        seen = set()
        for cu in self.firing_updates(s):
            if cu.input_widths:
                for combo in itertools.product(*(range(1 << w) for w in cu.input_widths)):
                    t = cu.step(s, combo)
                    if t not in seen:
                        seen.add(t)
                        out.append(t)
            else:
                t = cu.step(s, ())
                if t not in seen:
                    seen.add(t)
                    out.append(t)
        return out

    def step_env(self, env: dict[str, int], inputs: dict[str, int]) -> dict[str, int]:
        """Deterministic step under a full input assignment (missing -> 0)."""
        s = self.tuple_of(env)
        fired = self.firing_updates(s)
        if len(fired) != 1:
            raise AssertionError(
                f"transition relation not deterministic at {env}: {[u.tag for u in fired]}")
        cu = fired[0]
        x = tuple(inputs.get(n, 0) for n in cu.input_names)
        return self.env_of(cu.step(s, x))

    def is_step(self, pre: dict[str, int], post: dict[str, int]) -> bool:
        """Is (pre, post) a transition for some input valuation?"""
        s = self.tuple_of(pre)
        t = self.tuple_of(post)
        return t in self.successors(s)


@dataclass(frozen=True)
class ExplicitResult:
    verdict: str  # "SAFE" | "UNSAFE" | "BUDGET"
    trace: tuple[dict[str, int], ...] | None
    states_explored: int

    @property
    def safe(self) -> bool:
        return self.verdict == "SAFE"


def explicit_reachable(ts, state_budget: int = DEFAULT_STATE_BUDGET) -> ExplicitResult:
    """BFS over concrete states; Unsafe returns a shortest execution to Bad."""
    c = CompiledTs(ts)
    shifts = []
    off = 0
    for w in c.widths:
        shifts.append(off)
        off += w

    def pack(s: tuple) -> int:
        acc = 0
        for v, sh in zip(s, shifts):
            acc |= v << sh
        return acc

    visited: set[int] = set()
    parent: dict[int, int | None] = {}
    frontier: deque[tuple] = deque()

    def trace_from(s: tuple, key: int) -> ExplicitResult:
        masks = [(sh, _mask(w)) for sh, w in zip(shifts, c.widths)]

        def unpack(k: int) -> tuple:
            return tuple((k >> sh) & m for sh, m in masks)

        chain = [s]
        cur = key
        while parent[cur] is not None:
            cur = parent[cur]
            chain.append(unpack(cur))
        chain.reverse()
        return ExplicitResult("UNSAFE", tuple(c.env_of(x) for x in chain), len(visited))

    try:
        for s in c.initial_states(budget=state_budget):
            k = pack(s)
            if k in visited:
                continue
            visited.add(k)
            parent[k] = None
            if c.bad(s):
                return trace_from(s, k)
            frontier.append(s)
            if len(visited) > state_budget:
                return ExplicitResult("BUDGET", None, len(visited))
    except BudgetExceeded:
        return ExplicitResult("BUDGET", None, 0)

    while frontier:
        s = frontier.popleft()
        k = pack(s)
        for t in c.successors(s):
            kt = pack(t)
            if kt in visited:
                continue
            visited.add(kt)
            parent[kt] = k
            if len(visited) > state_budget:
                return ExplicitResult("BUDGET", None, len(visited))
            if c.bad(t):
                return trace_from(t, kt)
            frontier.append(t)
    return ExplicitResult("SAFE", None, len(visited))
