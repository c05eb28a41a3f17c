"""Counterexample-guided fence insertion until the program is provably safe.

Repair drives the PDR engine; on every discovered leak it reconstructs the
concrete execution, locates the speculative split point, activates a fence
on the speculating suffix (per the placement/activation policy), and
resumes verification.  Incremental mode keeps the engine and revalidates
its frames; non-incremental mode restarts from scratch.  Termination is
bounded by the number of fence sites.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

from specfence import ir
from specfence.encode import (
    FenceSite,
    Placement,
    SpecMode,
    TransitionSystem,
    add_fence,
    encode_speculative,
    fence_sites,
)
from specfence.logic import formula as F
from specfence.logic.explicit import CompiledTs
from specfence.pdr import Engine, InternalError, StepResult, pdr_init
from specfence.threat import ThreatModel, compute_vinst


class MalformedTrace(Exception):
    """No or multiple speculation flips: the engine produced a bogus trace."""


class NoSiteCoversLeak(Exception):
    """The speculating suffix carries no fence site (internal error)."""


@dataclass(frozen=True)
class Trace:
    """Concrete execution of a speculative system, ending in Bad."""

    ts: TransitionSystem
    states: tuple[dict[str, int], ...]

    def __len__(self) -> int:
        return len(self.states)

    def spec(self, i: int) -> int:
        return self.states[i]["spec"]

    def pc(self, i: int) -> int:
        return self.states[i]["pc"]

    def render(self) -> str:
        """Label sequence with the speculation flip marked."""
        k = speculative_split_point(self)
        parts = []
        for i, st in enumerate(self.states):
            desc = self.ts.meta.code_desc.get(st["pc"], f"pc{st['pc']}")
            if i == k:
                parts.append(f"*{desc}")
            else:
                parts.append(desc)
        return " -> ".join(parts) + "   (* = speculation starts)"


def speculative_split_point(t: Trace) -> int:
    """The unique index k with spec=0 at k-1 and spec>0 at k."""
    if not F.evaluate(t.ts.bad, t.states[-1]):
        raise MalformedTrace("trace does not end in Bad")
    flips = [i for i in range(1, len(t.states))
             if t.spec(i - 1) == 0 and t.spec(i) > 0]
    if len(flips) != 1:
        raise MalformedTrace(f"{len(flips)} speculation flips, expected exactly 1")
    return flips[0]


def _sites_by_guard_code(ts: TransitionSystem) -> dict[int, list[FenceSite]]:
    out: dict[int, list[FenceSite]] = {}
    for s in ts.meta.sites:
        out.setdefault(ts.meta.guard_code(s), []).append(s)
    return out


def choose_fence(t: Trace, sites: list[FenceSite], activation: str) -> str:
    """Pick the fence to activate for a leaking execution.

    nearest walks the trace backwards from the bad state: for after-branch
    sites it fences the branch side actually taken at the last conditional,
    for before-style sites the instruction whose assertion fired (the last
    instruction of the trace).  split-point fences the first site-bearing
    code point of the speculating suffix.
    """
    meta = t.ts.meta
    k = speculative_split_point(t)
    ids = {s.id for s in sites}
    after_branch = sites and all(s.position in ("then", "else") for s in sites)

    if activation == "nearest":
        if after_branch:
            prog = meta.program
            for i in range(len(t) - 2, -1, -1):
                code = t.pc(i)
                if code >= len(prog.insts):
                    continue
                inst = prog.insts[code]
                if not isinstance(inst, ir.CondBranch):
                    continue
                taken = t.pc(i + 1)
                if taken == meta.entry_code(inst.then_target):
                    cand = f"then@L{code}"
                elif taken == meta.entry_code(inst.else_target):
                    cand = f"else@L{code}"
                else:
                    raise MalformedTrace(f"branch L{code} stepped to unknown code {taken}")
                if cand in ids:
                    return cand
            raise NoSiteCoversLeak("no fenced conditional precedes the bad state")
        # before-style: the leak fires at the assertion node of the last
        # instruction; fence that instruction
        final_code = t.pc(len(t) - 2)
        for label, ac in meta.assert_code.items():
            if ac == final_code and f"before@L{label}" in ids:
                return f"before@L{label}"
        raise NoSiteCoversLeak("leaking instruction carries no fence site")

    if activation == "split-point":
        by_code = _sites_by_guard_code(t.ts)
        for i in range(k, len(t)):
            cands = [s for s in by_code.get(t.pc(i), []) if s.id in ids]
            if cands:
                return cands[0].id
        raise NoSiteCoversLeak("speculating suffix carries no fence site")

    raise ValueError(f"unknown activation policy {activation!r}")


def assert_trace_killed(new_ts: TransitionSystem, t: Trace, site_id: str) -> None:
    """Replaying the trace with the fence active must fail at or before it."""
    site = new_ts.meta.site_by_id(site_id)
    guard_code = new_ts.meta.guard_code(site)
    fname = new_ts.meta.fence_var[site_id]
    k = speculative_split_point(t)

    fence_at = None
    for i in range(k, len(t) - 1):
        if t.pc(i) == guard_code and t.spec(i) > 0:
            fence_at = i
            break
    if fence_at is None:
        raise InternalError(f"fence {site_id} never guards the speculating suffix")

    compiled = CompiledTs(new_ts)
    flipped = [dict(st, **{fname: 1}) for st in t.states]
    for i in range(len(flipped) - 1):
        if not compiled.is_step(flipped[i], flipped[i + 1]):
            if i > fence_at:
                raise InternalError("trace survives past the activated fence")
            return
    raise InternalError("activated fence does not kill the leaking trace")


@dataclass(frozen=True)
class RepairOptions:
    placement: Placement = Placement.AFTER_BRANCH
    activation: str = "nearest"  # "nearest" | "split-point"
    incremental: bool = True
    mode: SpecMode = SpecMode.unbounded()
    threat: ThreatModel = ThreatModel.STRONG
    loads_only: bool = False
    initial_fences: tuple[str, ...] = ()
    seed: int = 0
    deadline: float | None = None
    log: object = None  # callable(str) | None


@dataclass
class IterationStats:
    fence: str | None  # fence activated at the end of this iteration
    queries: int
    lemmas_kept: int
    lemmas_dropped: int
    wall_ms: float


@dataclass
class RepairResult:
    fences: tuple[str, ...]
    invariant: F.Node
    iterations: int  # AddFence applications
    per_iteration: list[IterationStats] = field(default_factory=list)
    ts: TransitionSystem | None = None
    sites: tuple[FenceSite, ...] = ()
    total_queries: int = 0
    lemmas_kept: int = 0
    lemmas_dropped: int = 0
    fence_history: tuple[tuple[str, ...], ...] = ()
    verdict: str = "SAFE"


def repair(p: ir.Program, opts: RepairOptions) -> RepairResult:
    """Verify-and-repair loop; always returns a certified-safe result."""
    vinst = compute_vinst(p, opts.threat, loads_only=opts.loads_only)
    sites = fence_sites(p, vinst, opts.placement)
    ts = encode_speculative(p, vinst, sites, opts.mode, active=set(opts.initial_fences))

    log = opts.log if callable(opts.log) else None
    engine = pdr_init(ts, seed=opts.seed, log=log, deadline=opts.deadline)
    fences: list[str] = []
    history: list[tuple[str, ...]] = [tuple(opts.initial_fences)]
    per_iter: list[IterationStats] = []
    total_queries = 0
    queries_mark = 0
    t_mark = time.monotonic()

    while True:
        res: StepResult = engine.run()
        if res.kind == "safe":
            per_iter.append(IterationStats(None, engine.stats.queries - queries_mark,
                                           0, 0, (time.monotonic() - t_mark) * 1000))
            total_queries += engine.stats.queries
            return RepairResult(
                fences=tuple(fences),
                invariant=engine.extract_invariant(),
                iterations=len(fences),
                per_iteration=per_iter,
                ts=ts,
                sites=tuple(sites),
                total_queries=total_queries,
                lemmas_kept=sum(s.lemmas_kept for s in per_iter),
                lemmas_dropped=sum(s.lemmas_dropped for s in per_iter),
                fence_history=tuple(history),
                verdict="SAFE",
            )

        # leak found: analyze and fence
        trace = Trace(ts, tuple(engine.reconstruct_execution(res.leak)))
        if log:
            log(f"SpecLeak len={len(trace)} split={speculative_split_point(trace)}")
        if len(fences) >= len(sites):
            raise InternalError("more repair iterations than fence sites")
        site_id = choose_fence(trace, list(sites), opts.activation)
        new_ts = add_fence(ts, site_id)
        if log:
            log(f"AddFence {site_id}")
        assert_trace_killed(new_ts, trace, site_id)
        ts = new_ts
        fences.append(site_id)
        history.append(tuple(fences))

        if opts.incremental:
            engine.apply_new_init(ts)
            engine.reset_queue()
            engine.reset_reach()
            kept, dropped = engine.revalidate_frames()
            per_iter.append(IterationStats(site_id, engine.stats.queries - queries_mark,
                                           kept, dropped,
                                           (time.monotonic() - t_mark) * 1000))
            queries_mark = engine.stats.queries
        else:
            dropped = len(engine.frame_lemmas(1))
            total_queries += engine.stats.queries
            per_iter.append(IterationStats(site_id, engine.stats.queries - queries_mark,
                                           0, dropped,
                                           (time.monotonic() - t_mark) * 1000))
            engine = pdr_init(ts, seed=opts.seed, log=log, deadline=opts.deadline)
            queries_mark = 0
        t_mark = time.monotonic()


def verify(p: ir.Program, opts: RepairOptions):
    """One-shot verification (Alg. 1 with the Cex rule terminal).

    Returns ("SAFE", invariant, ts, engine) or ("UNSAFE", Trace, ts, engine).
    """
    vinst = compute_vinst(p, opts.threat, loads_only=opts.loads_only)
    sites = fence_sites(p, vinst, opts.placement)
    ts = encode_speculative(p, vinst, sites, opts.mode, active=set(opts.initial_fences))
    log = opts.log if callable(opts.log) else None
    engine = pdr_init(ts, seed=opts.seed, log=log, deadline=opts.deadline)
    res = engine.run()
    if res.kind == "safe":
        return "SAFE", engine.extract_invariant(), ts, engine
    trace = Trace(ts, tuple(engine.reconstruct_execution(res.leak)))
    return "UNSAFE", trace, ts, engine


def revalidate_frames(engine: Engine, new_ts: TransitionSystem) -> Engine:
    """Swap the engine onto a fence-extended Init and re-admit its lemmas."""
    engine.apply_new_init(new_ts)
    engine.reset_queue()
    engine.reset_reach()
    engine.revalidate_frames()
    return engine
