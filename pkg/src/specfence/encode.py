"""Symbolic transition systems for standard and speculative semantics.

State variables are the program's data variables, one variable per array
cell, the program counter, and (speculative systems only) the speculation
counter plus one frozen boolean per fence site.  Nondeterminism (branch
prediction, out-of-bounds load results) is carried by explicit input
variables, so every guarded update is deterministic given (state, inputs).

Program-counter code points: instruction labels keep their numbers, the
one-past-the-end halt point is `n`, synthetic assertion nodes for vulnerable
instructions follow, and the bad point is the all-ones code.  Control
entering a vulnerable instruction is retargeted through its assertion node.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, replace

from specfence import ir
from specfence.logic import formula as F
from specfence.threat import VInstSet


class CapacityError(Exception):
    """Encoded state exceeds the configured bit budget."""


class AlreadyActiveError(Exception):
    """Fence is already active in Init."""


DEFAULT_CAPACITY_BITS = 4096


class Placement(enum.Enum):
    EVERY_INST = "every-inst"
    AFTER_BRANCH = "after-branch"
    BEFORE_MEMORY = "before-memory"


@dataclass(frozen=True)
class SpecMode:
    kind: str  # "unbounded" | "bounded"
    k: int = 0

    @staticmethod
    def unbounded() -> "SpecMode":
        return SpecMode("unbounded")

    @staticmethod
    def bounded(k: int) -> "SpecMode":
        assert k >= 1
        return SpecMode("bounded", k)

    @property
    def is_bounded(self) -> bool:
        return self.kind == "bounded"

    def __str__(self) -> str:
        return self.kind if not self.is_bounded else f"bounded:{self.k}"


@dataclass(frozen=True)
class StateVar:
    name: str
    kind: str  # data | cell | pc | spec | fence
    width: int


@dataclass(frozen=True)
class InputVar:
    name: str
    width: int


@dataclass(frozen=True)
class GuardedUpdate:
    """guard(X) -> X' = assigns(X, inputs); unlisted variables are unchanged."""

    guard: F.Node
    assigns: tuple[tuple[str, F.Node], ...]
    inputs: tuple[InputVar, ...]
    pc_code: int | None  # code this update dispatches on, None for global cases
    tag: str


@dataclass(frozen=True)
class FenceSite:
    id: str
    anchor: int  # instruction label whose execution the fence guards
    position: str  # "before" | "then" | "else"


@dataclass(frozen=True)
class TsMeta:
    program: ir.Program
    halt_code: int
    assert_code: dict[int, int]  # vinst label -> assertion-node code
    bot_code: int
    top_code: int
    pc_width: int
    spec_width: int  # 0 in standard systems
    mode: SpecMode | None
    vinst: tuple[int, ...]
    sites: tuple[FenceSite, ...]
    fence_var: dict[str, str]  # site id -> state variable name
    code_desc: dict[int, str]

    def entry_code(self, label: int) -> int:
        return self.assert_code.get(label, label)

    def site_by_id(self, site_id: str) -> FenceSite:
        for s in self.sites:
            if s.id == site_id:
                return s
        raise KeyError(site_id)

    def guard_code(self, site: FenceSite) -> int:
        """Code point where the fence stutters speculation."""
        return self.assert_code.get(site.anchor, site.anchor)


@dataclass(frozen=True)
class TransitionSystem:
    state_vars: tuple[StateVar, ...]
    init_fixed: tuple[tuple[str, int], ...]  # constant initial values
    init_free: tuple[str, ...]  # attacker-controlled, unconstrained at Init
    updates: tuple[GuardedUpdate, ...]
    bad: F.Node
    meta: TsMeta

    def widths(self) -> dict[str, int]:
        return {v.name: v.width for v in self.state_vars}

    def state_bit_count(self) -> int:
        return sum(v.width for v in self.state_vars)

    def init_formula(self) -> F.Node:
        widths = self.widths()
        return F.and_(F.eq(F.bv_var(n, widths[n]), F.bv_const(v, widths[n]))
                      for n, v in self.init_fixed)

    def tr_formula(self) -> F.Node:
        """Tr(X, I, X'): disjunction of guarded updates with frame conditions."""
        widths = self.widths()
        parts = []
        for u in self.updates:
            assigned = dict(u.assigns)
            conj = [u.guard]
            for v in self.state_vars:
                nxt = F.bv_var(v.name + "'", v.width)
                conj.append(F.eq(nxt, assigned.get(v.name, F.bv_var(v.name, widths[v.name]))))
            parts.append(F.and_(conj))
        return F.or_(parts)

    def fence_value(self, site_id: str) -> int:
        name = self.meta.fence_var[site_id]
        return dict(self.init_fixed)[name]

    def active_fences(self) -> tuple[str, ...]:
        return tuple(s.id for s in self.meta.sites if self.fence_value(s.id) == 1)

    def satisfies_init(self, env: dict[str, int]) -> bool:
        return all(env[n] == v for n, v in self.init_fixed)


# ---------------------------------------------------------------------------
# Shared term construction

def _cell(arr: str, j: int, width: int) -> F.Node:
    return F.bv_var(f"{arr}[{j}]", width)


def expr_term(e: ir.Expr) -> F.Node:
    """Typed IR expression to a bit-vector term over state variables."""
    if isinstance(e, ir.Var):
        return F.bv_var(e.name, e.width)
    if isinstance(e, ir.Const):
        return F.bv_const(e.value, e.width)
    if isinstance(e, ir.BinOp):
        a, b = expr_term(e.a), expr_term(e.b)
        if e.op in ir.CMP_OPS:
            cmp = {"eq": F.eq, "ult": F.ult, "ule": F.ule}[e.op](a, b)
            return F.bool_to_bit(cmp)
        return {"add": F.add, "sub": F.sub, "mul": F.mul, "and": F.band,
                "or": F.bor, "xor": F.bxor}[e.op](a, b)
    if isinstance(e, ir.NotOp):
        return F.bnot(expr_term(e.a))
    if isinstance(e, ir.Ite):
        return F.ite(F.bit_is_set(expr_term(e.cond)), expr_term(e.a), expr_term(e.b))
    if isinstance(e, ir.Extend):
        inner = expr_term(e.a)
        return F.zext(inner, e.width) if e.op == "zext" else F.trunc(inner, e.width)
    raise TypeError(e)


def _bounds_check(idx: F.Node, length: int) -> F.Node | None:
    """Formula `idx < length`, or None when the index domain cannot overflow."""
    if (1 << idx.width) <= length:
        return None
    w = max(idx.width, length.bit_length())
    return F.ult(F.zext(idx, w), F.bv_const(length, w))


def _select_cells(arr: ir.ArrayDecl, idx: F.Node, fallback: F.Node) -> F.Node:
    hi = min(arr.length, 1 << min(idx.width, 30))
    acc = fallback
    for j in reversed(range(hi)):
        acc = F.ite(F.eq(idx, F.bv_const(j, idx.width)), _cell(arr.name, j, arr.elem_width), acc)
    return acc


def _store_assigns(arr: ir.ArrayDecl, idx: F.Node, value: F.Node) -> list[tuple[str, F.Node]]:
    hi = min(arr.length, 1 << min(idx.width, 30))
    out = []
    for j in range(hi):
        cur = _cell(arr.name, j, arr.elem_width)
        out.append((cur.aux, F.ite(F.eq(idx, F.bv_const(j, idx.width)), value, cur)))
    return out


# ---------------------------------------------------------------------------
# Encoders

def _base_state_vars(p: ir.Program, pc_width: int) -> list[StateVar]:
    out = [StateVar(v.name, "data", v.width) for v in p.vars]
    for a in p.arrays:
        out.extend(StateVar(f"{a.name}[{j}]", "cell", a.elem_width) for j in range(a.length))
    out.append(StateVar("pc", "pc", pc_width))
    return out


def _base_init(p: ir.Program, entry_code: int) -> tuple[list[tuple[str, int]], list[str]]:
    fixed: list[tuple[str, int]] = []
    free: list[str] = []
    for v in p.vars:
        if v.is_input:
            free.append(v.name)
        else:
            fixed.append((v.name, 0))
    for a in p.arrays:
        fixed.extend((f"{a.name}[{j}]", 0) for j in range(a.length))
    fixed.append(("pc", entry_code))
    return fixed, free


def _pc_layout(top: int) -> tuple[int, int]:
    """pc width and the all-ones bad code, given the highest used code."""
    width = (top + 1).bit_length()
    return width, (1 << width) - 1


def _check_capacity(svars: list[StateVar], capacity: int) -> None:
    bits = sum(v.width for v in svars)
    if bits > capacity:
        raise CapacityError(f"state needs {bits} bits, budget is {capacity}")


def encode_standard(p: ir.Program, capacity_bits: int = DEFAULT_CAPACITY_BITS) -> TransitionSystem:
    """Standard (non-speculative) semantics as a total transition system."""
    n = len(p.insts)
    top = n  # labels 0..n-1 plus the halt point n
    pc_width, bot = _pc_layout(top)
    svars = _base_state_vars(p, pc_width)
    _check_capacity(svars, capacity_bits)

    pc = F.bv_var("pc", pc_width)
    code = lambda c: F.bv_const(c, pc_width)
    updates: list[GuardedUpdate] = []

    for label, inst in enumerate(p.insts):
        at = F.eq(pc, code(label))
        nxt = code(label + 1)
        if isinstance(inst, ir.Assign):
            updates.append(GuardedUpdate(
                at, ((inst.dest, expr_term(inst.expr)), ("pc", nxt)), (), label, f"L{label}"))
        elif isinstance(inst, ir.CondBranch):
            tgt = F.ite(F.bit_is_set(expr_term(inst.cond)),
                        code(inst.then_target), code(inst.else_target))
            updates.append(GuardedUpdate(at, (("pc", tgt),), (), label, f"L{label}"))
        elif isinstance(inst, ir.Goto):
            updates.append(GuardedUpdate(at, (("pc", code(inst.target)),), (), label, f"L{label}"))
        elif isinstance(inst, ir.Load):
            arr = p.array_decl(inst.array)
            idx = expr_term(inst.index)
            inb = _bounds_check(idx, arr.length)
            mux = _select_cells(arr, idx, _cell(arr.name, 0, arr.elem_width))
            if inb is None:
                updates.append(GuardedUpdate(
                    at, ((inst.dest, mux), ("pc", nxt)), (), label, f"L{label}"))
            else:
                havoc = InputVar(f"oob@L{label}", arr.elem_width)
                updates.append(GuardedUpdate(
                    F.and_(at, inb), ((inst.dest, mux), ("pc", nxt)), (), label, f"L{label}"))
                updates.append(GuardedUpdate(
                    F.and_(at, F.not_(inb)),
                    ((inst.dest, F.bv_var(havoc.name, havoc.width)), ("pc", nxt)),
                    (havoc,), label, f"L{label} oob"))
        elif isinstance(inst, ir.Store):
            arr = p.array_decl(inst.array)
            assigns = _store_assigns(arr, expr_term(inst.index), expr_term(inst.value))
            updates.append(GuardedUpdate(
                at, tuple(assigns) + (("pc", nxt),), (), label, f"L{label}"))
        elif isinstance(inst, ir.Assume):
            tgt = F.ite(F.bit_is_set(expr_term(inst.cond)), nxt, pc)
            updates.append(GuardedUpdate(at, (("pc", tgt),), (), label, f"L{label}"))
        elif isinstance(inst, ir.Assert):
            tgt = F.ite(F.bit_is_set(expr_term(inst.cond)), nxt, code(bot))
            updates.append(GuardedUpdate(at, (("pc", tgt),), (), label, f"L{label}"))
        elif isinstance(inst, ir.Halt):
            updates.append(GuardedUpdate(at, (), (), label, f"L{label} halt"))
        else:
            raise TypeError(inst)

    updates.append(GuardedUpdate(F.eq(pc, code(n)), (), (), n, "halt"))
    updates.append(GuardedUpdate(F.eq(pc, code(bot)), (), (), bot, "bot"))
    if top + 1 < bot:
        updates.append(GuardedUpdate(
            F.and_(F.ult(code(top), pc), F.ult(pc, code(bot))), (), (), None, "unused-codes"))

    fixed, free = _base_init(p, entry_code=0)
    desc = {l: f"L{l}" for l in range(n)}
    desc[n] = "halt"
    desc[bot] = "bot"
    meta = TsMeta(p, n, {}, bot, top, pc_width, 0, None, (), (), {}, desc)
    return TransitionSystem(tuple(svars), tuple(fixed), tuple(free),
                            tuple(updates), F.eq(pc, code(bot)), meta)


def fence_sites(p: ir.Program, vinst: VInstSet, placement: Placement) -> list[FenceSite]:
    """Fence sites for a placement policy.

    every-inst puts a site before each Assign/CondBranch/Goto/Load/Store;
    after-branch puts one site on each side of every conditional, anchored at
    the first instruction of the successor; before-memory guards each
    vulnerable instruction.  Branch sides falling off the end of the program
    get no site (nothing runs there).
    """
    sites: list[FenceSite] = []
    n = len(p.insts)
    if placement is Placement.EVERY_INST:
        for label, inst in enumerate(p.insts):
            if isinstance(inst, (ir.Assign, ir.CondBranch, ir.Goto, ir.Load, ir.Store)):
                sites.append(FenceSite(f"before@L{label}", label, "before"))
    elif placement is Placement.AFTER_BRANCH:
        for label in sorted(ir.conditional_instructions(p)):
            br = p.insts[label]
            assert isinstance(br, ir.CondBranch)
            for side, target in (("then", br.then_target), ("else", br.else_target)):
                if target < n:
                    sites.append(FenceSite(f"{side}@L{label}", target, side))
    elif placement is Placement.BEFORE_MEMORY:
        for label in sorted(vinst.labels):
            sites.append(FenceSite(f"before@L{label}", label, "before"))
    else:
        raise TypeError(placement)
    return sites


def encode_speculative(p: ir.Program, vinst: VInstSet, sites: list[FenceSite],
                       mode: SpecMode, active: set[str] = frozenset(),
                       capacity_bits: int = DEFAULT_CAPACITY_BITS) -> TransitionSystem:
    """Speculative semantics with fence variables and assertion nodes."""
    ids = [s.id for s in sites]
    if len(set(ids)) != len(ids):
        raise ValueError("fence site ids must be unique")
    unknown = set(active) - set(ids)
    if unknown:
        raise ValueError(f"active fences not among sites: {sorted(unknown)}")

    n = len(p.insts)
    vlabels = tuple(sorted(vinst.labels))
    assert_code = {l: n + 1 + i for i, l in enumerate(vlabels)}
    top = n + len(vlabels)
    pc_width, bot = _pc_layout(top)

    bounded = mode.is_bounded
    spec_width = max(1, mode.k.bit_length()) if bounded else 1

    svars = _base_state_vars(p, pc_width)
    svars.append(StateVar("spec", "spec", spec_width))
    fence_var = {s.id: f"fence:{s.id}" for s in sites}
    svars.extend(StateVar(fence_var[s.id], "fence", 1) for s in sites)
    _check_capacity(svars, capacity_bits)

    pc = F.bv_var("pc", pc_width)
    spec = F.bv_var("spec", spec_width)
    code = lambda c: F.bv_const(c, pc_width)
    entry = lambda l: code(assert_code.get(l, l))
    spec_zero = F.eq(spec, F.bv_const(0, spec_width))
    spec_pos = F.not_(spec_zero)
    step_ok: list[F.Node] = []
    if bounded:
        step_ok = [F.ult(spec, F.bv_const(mode.k, spec_width))]

    # fence variables guarding each code point (anchors behind assertion
    # nodes are guarded at the node, matching assume-before-assert ordering)
    guards_at: dict[int, list[F.Node]] = {}
    for s in sites:
        gc = assert_code.get(s.anchor, s.anchor)
        guards_at.setdefault(gc, []).append(F.bit_is_set(F.bv_var(fence_var[s.id], 1)))

    def spec_next_uncond() -> list[tuple[str, F.Node]]:
        if not bounded:
            return []  # 1-bit flag never changes at unconditional instructions
        bumped = F.ite(spec_pos, F.add(spec, F.bv_const(1, spec_width)),
                       F.bv_const(0, spec_width))
        return [("spec", bumped)]

    def emit(code_point: int, assigns: list[tuple[str, F.Node]],
             inputs: tuple[InputVar, ...], tag: str,
             extra_guard: F.Node | None = None) -> None:
        at = F.eq(pc, code(code_point))
        fences = guards_at.get(code_point, [])
        fcond = F.and_(F.or_(fences), spec_pos) if fences else None
        if fcond is not None:
            updates.append(GuardedUpdate(
                F.and_([at, fcond] + step_ok), (), (), code_point, f"{tag} fence-stutter"))
        guard = [at] + ([F.not_(fcond)] if fcond is not None else []) + step_ok
        if extra_guard is not None:
            guard.append(extra_guard)
        updates.append(GuardedUpdate(
            F.and_(guard), tuple(assigns), inputs, code_point, tag))

    updates: list[GuardedUpdate] = []
    for label, inst in enumerate(p.insts):
        nxt = entry(label + 1)  # one past the end resolves to the halt point
        if isinstance(inst, ir.Assign):
            emit(label, [(inst.dest, expr_term(inst.expr)), ("pc", nxt)] + spec_next_uncond(),
                 (), f"L{label}")
        elif isinstance(inst, ir.CondBranch):
            cond = F.bit_is_set(expr_term(inst.cond))
            ch = InputVar(f"ch@L{label}", 1)
            ch_set = F.bit_is_set(F.bv_var(ch.name, 1))
            if bounded:
                one = F.bv_const(1, spec_width)
                zero = F.bv_const(0, spec_width)
                then_spec = F.ite(F.or_(F.not_(cond), spec_pos), F.add(spec, one), zero)
                else_spec = F.ite(F.or_(cond, spec_pos), F.add(spec, one), zero)
            else:
                then_spec = F.bor(F.bool_to_bit(F.not_(cond)), spec)
                else_spec = F.bor(F.bool_to_bit(cond), spec)
            emit(label, [("pc", F.ite(ch_set, entry(inst.then_target), entry(inst.else_target))),
                         ("spec", F.ite(ch_set, then_spec, else_spec))],
                 (ch,), f"L{label}")
        elif isinstance(inst, ir.Goto):
            emit(label, [("pc", entry(inst.target))] + spec_next_uncond(), (), f"L{label}")
        elif isinstance(inst, ir.Load):
            arr = p.array_decl(inst.array)
            idx = expr_term(inst.index)
            inb = _bounds_check(idx, arr.length)
            mux = _select_cells(arr, idx, _cell(arr.name, 0, arr.elem_width))
            if inb is None:
                emit(label, [(inst.dest, mux), ("pc", nxt)] + spec_next_uncond(), (), f"L{label}")
            else:
                havoc = InputVar(f"oob@L{label}", arr.elem_width)
                emit(label, [(inst.dest, mux), ("pc", nxt)] + spec_next_uncond(),
                     (), f"L{label}", extra_guard=inb)
                emit(label, [(inst.dest, F.bv_var(havoc.name, havoc.width)), ("pc", nxt)]
                     + spec_next_uncond(), (havoc,), f"L{label} oob",
                     extra_guard=F.not_(inb))
        elif isinstance(inst, ir.Store):
            arr = p.array_decl(inst.array)
            assigns = _store_assigns(arr, expr_term(inst.index), expr_term(inst.value))
            emit(label, assigns + [("pc", nxt)] + spec_next_uncond(), (), f"L{label}")
        elif isinstance(inst, ir.Assume):
            cond = F.bit_is_set(expr_term(inst.cond))
            emit(label, [("pc", F.ite(cond, nxt, pc))] + spec_next_uncond(), (), f"L{label}")
        elif isinstance(inst, ir.Assert):
            cond = F.bit_is_set(expr_term(inst.cond))
            emit(label, [("pc", F.ite(cond, nxt, code(bot)))] + spec_next_uncond(),
                 (), f"L{label}")
        elif isinstance(inst, ir.Halt):
            emit(label, [], (), f"L{label} halt")
        else:
            raise TypeError(inst)

    # assertion nodes: pc -> bot exactly when executed while speculating
    for label in vlabels:
        ac = assert_code[label]
        emit(ac, [("pc", F.ite(spec_zero, code(label), code(bot)))], (), f"a@L{label}")

    emit(n, [], (), "halt")
    updates.append(GuardedUpdate(F.and_([F.eq(pc, code(bot))] + step_ok), (), (), bot, "bot"))
    if top + 1 < bot:
        updates.append(GuardedUpdate(
            F.and_([F.ult(code(top), pc), F.ult(pc, code(bot))] + step_ok),
            (), (), None, "unused-codes"))
    if bounded:
        updates.append(GuardedUpdate(
            F.not_(F.ult(spec, F.bv_const(mode.k, spec_width))), (), (), None, "spec-saturated"))

    fixed, free = _base_init(p, entry_code=assert_code.get(0, 0))
    fixed.append(("spec", 0))
    for s in sites:
        fixed.append((fence_var[s.id], 1 if s.id in active else 0))

    desc = {l: f"L{l}" for l in range(n)}
    desc[n] = "halt"
    desc[bot] = "bot"
    for l, c in assert_code.items():
        desc[c] = f"a@L{l}"
    meta = TsMeta(p, n, assert_code, bot, top, pc_width, spec_width, mode,
                  vlabels, tuple(sites), fence_var, desc)
    return TransitionSystem(tuple(svars), tuple(fixed), tuple(free),
                            tuple(updates), F.eq(pc, code(bot)), meta)


def add_fence(ts: TransitionSystem, site_id: str) -> TransitionSystem:
    """New system whose Init activates the fence; Tr and Bad are untouched."""
    name = ts.meta.fence_var[site_id]
    if dict(ts.init_fixed)[name] == 1:
        raise AlreadyActiveError(f"fence {site_id} already active")
    fixed = tuple((n, 1 if n == name else v) for n, v in ts.init_fixed)
    return replace(ts, init_fixed=fixed)
