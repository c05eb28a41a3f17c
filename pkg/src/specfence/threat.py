"""Threat models: which memory instructions count as observable leaks.

Two models are supported.  Under the strong model every load and store is
vulnerable.  Under the classical model only accesses whose index carries
*memory-derived* attacker influence are vulnerable: reading a[i] at an
attacker-chosen i leaks nothing the attacker does not already know, but a
nested access b[a[i]] exposes the loaded contents through the cache.  The
distinction is tracked as two taint flavours, DIRECT (flows only through
register operations from inputs) and DERIVED (passed through a load at a
tainted index, or through tainted array contents).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

from specfence import ir

DIRECT = 1
DERIVED = 2


class ThreatModel(enum.Enum):
    STRONG = "strong"
    CLASSICAL = "classical"


@dataclass(frozen=True)
class VInstSet:
    """Vulnerable instruction labels with a per-label rationale tag."""

    labels: frozenset[int]
    rationale: dict[int, str]  # label -> "strong-all-memory" | "tainted-index"

    def __contains__(self, label: int) -> bool:
        return label in self.labels


@dataclass(frozen=True)
class TaintFacts:
    """Fixpoint taint facts: flavour masks after each instruction."""

    before: tuple[dict[str, int], ...]  # per label: var/array name -> flavour mask
    after: tuple[dict[str, int], ...]

    def tainted_after(self, label: int) -> set[str]:
        return {name for name, fl in self.after[label].items() if fl}


def _successors(p: ir.Program, label: int) -> list[int]:
    inst = p.insts[label]
    if isinstance(inst, ir.CondBranch):
        return [inst.then_target, inst.else_target]
    if isinstance(inst, ir.Goto):
        return [inst.target]
    if isinstance(inst, ir.Halt):
        return []
    return [label + 1]


def _expr_taint(e: ir.Expr, env: dict[str, int]) -> int:
    mask = 0
    for name in ir.expr_vars(e):
        mask |= env.get(name, 0)
    return mask


def _transfer(inst: ir.Instruction, env: dict[str, int]) -> dict[str, int]:
    out = dict(env)
    if isinstance(inst, ir.Assign):
        fl = _expr_taint(inst.expr, env)
        if fl:
            out[inst.dest] = fl
        else:
            out.pop(inst.dest, None)
    elif isinstance(inst, ir.Load):
        fl = env.get(inst.array, 0)
        if _expr_taint(inst.index, env):
            # value read at an attacker-influenced position: memory-derived
            fl |= DERIVED
        if fl:
            out[inst.dest] = fl
        else:
            out.pop(inst.dest, None)
    elif isinstance(inst, ir.Store):
        fl = _expr_taint(inst.value, env)
        if fl:
            # array-level taint: one tainted store taints every future load
            out[inst.array] = out.get(inst.array, 0) | fl
    return out


def taint_map(p: ir.Program, worklist_order: str = "fifo") -> TaintFacts:
    """Monotone forward fixpoint of taint facts over the control-flow graph.

    Per-label `before` facts are joined by union over predecessors, so they
    only grow and the fixpoint is independent of `worklist_order` ("fifo" or
    "lifo", exposed for the confluence test).
    """
    n = len(p.insts)
    before: list[dict[str, int]] = [{} for _ in range(n)]
    after: list[dict[str, int]] = [{} for _ in range(n)]
    before[p.entry] = {name: DIRECT for name in p.inputs}

    work = [p.entry]
    on_work = {p.entry}
    while work:
        label = work.pop(0) if worklist_order == "fifo" else work.pop()
        on_work.discard(label)
        out = _transfer(p.insts[label], before[label])
        after[label] = out
        for succ in _successors(p, label):
            if succ >= n:
                continue
            merged = dict(before[succ])
            changed = False
            for name, fl in out.items():
                if merged.get(name, 0) | fl != merged.get(name, 0):
                    merged[name] = merged.get(name, 0) | fl
                    changed = True
            if changed:
                before[succ] = merged
                if succ not in on_work:
                    work.append(succ)
                    on_work.add(succ)
    return TaintFacts(tuple(before), tuple(after))


def compute_vinst(p: ir.Program, model: ThreatModel,
                  loads_only: bool = False) -> VInstSet:
    """Vulnerable instruction set for the given threat model."""
    mem = ir.memory_instructions(p)
    if loads_only:
        mem = {l for l in mem if isinstance(p.insts[l], ir.Load)}
    if model is ThreatModel.STRONG:
        return VInstSet(frozenset(mem), {l: "strong-all-memory" for l in sorted(mem)})

    facts = taint_map(p)
    labels = set()
    for label in sorted(mem):
        inst = p.insts[label]
        index = inst.index if isinstance(inst, (ir.Load, ir.Store)) else None
        if index is not None and _expr_taint(index, facts.before[label]) & DERIVED:
            labels.add(label)
    return VInstSet(frozenset(labels), {l: "tainted-index" for l in sorted(labels)})


def format_taint_map(p: ir.Program, facts: TaintFacts) -> str:
    """Human-readable taint dump used by `specfence taint`."""
    names = {DIRECT: "direct", DERIVED: "derived", DIRECT | DERIVED: "direct+derived"}
    lines = []
    for label in range(len(p.insts)):
        entries = sorted(facts.after[label].items())
        rendered = ", ".join(f"{n}:{names[fl]}" for n, fl in entries) or "-"
        lines.append(f"L{label}: {rendered}")
    return "\n".join(lines) + "\n"
