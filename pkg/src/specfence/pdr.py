"""IC3/PDR engine over bit-blasted transition systems.

Frames are a monotone lemma pool: each lemma carries a level (possibly
infinity), and frame j denotes Init at j=0, else the conjunction of all
lemmas at levels >= j.  One incremental solver holds Tr plus every lemma
clause behind a per-lemma activation literal; a second solver holds Init
(fence initializations are passed as per-query assumptions so fence
activation never rebuilds a solver).

Nondeterminism in Tr is carried by input variables, so predecessor
generalization fixes the model's input assignment and extracts an
assumption core (every state in the lifted cube steps into the parent cube
under those inputs).  Discovered counterexamples are therefore replayable
concretely, which is what the repair loop relies on.

The engine applies one scheduling-selected rule per step and can report
every rule application through a log callback.
"""

from __future__ import annotations

import heapq
import math
import time
from dataclasses import dataclass, field
from typing import Callable

from specfence.encode import TransitionSystem
from specfence.logic import formula as F
from specfence.logic.cdcl import ResourceError
from specfence.logic.cube import BitLit, Cube, cube_from_env
from specfence.logic.explicit import CompiledTs
from specfence.logic.inductive import primed
from specfence.logic.solver import SolverContext


class RequireViolated(Exception):
    """Init and Bad intersect; the safety problem is malformed."""


class NotSafeError(Exception):
    """Invariant requested from an engine that has not proven safety."""


class InternalError(Exception):
    """Engine self-check failed (invalid trace replay or missing witness)."""


@dataclass(frozen=True)
class Lemma:
    cube: Cube
    created: int


@dataclass(frozen=True)
class Obligation:
    cube: Cube
    level: int
    seq: int
    parent: "Obligation | None"
    # full input assignment stepping any state of `cube` into `parent.cube`
    inputs: dict[str, int] | None


@dataclass(frozen=True)
class LeakHandle:
    obligation: Obligation
    witness: dict[str, int]        # concrete state in cube & Reach
    reach_index: int | None        # index into Reach, None when an Init state


@dataclass(frozen=True)
class StepResult:
    kind: str  # "continue" | "safe" | "leak"
    rule: str
    invariant: F.Node | None = None
    leak: LeakHandle | None = None


@dataclass
class ReachEntry:
    env: dict[str, int]
    pred: int | None               # Reach index; None = initial state
    inputs: dict[str, int] | None


@dataclass
class EngineStats:
    queries: int = 0
    rules: dict[str, int] = field(default_factory=dict)
    lemmas_added: int = 0
    lemmas_kept: int = 0
    lemmas_dropped: int = 0

    def bump(self, rule: str) -> None:
        self.rules[rule] = self.rules.get(rule, 0) + 1


class Engine:
    """One safety problem; frames, queue and Reach exposed for the repair loop."""

    def __init__(self, ts: TransitionSystem, seed: int = 0,
                 log: Callable[[str], None] | None = None,
                 deadline: float | None = None):
        self.ts = ts
        self.seed = seed
        self.log_fn = log
        self.deadline = deadline
        self.stats = EngineStats()
        self.compiled = CompiledTs(ts)
        self.widths = ts.widths()

        # main solver: Tr + Bad definition + lemma clauses under activations
        self.main = SolverContext(seed=seed)
        for v in ts.state_vars:
            self.main.bv_bits(v.name, v.width)
            self.main.bv_bits(primed(v.name), v.width)
        self._input_widths: dict[str, int] = {}
        for u in ts.updates:
            for iv in u.inputs:
                self._input_widths[iv.name] = iv.width
                self.main.bv_bits(iv.name, iv.width)
        self.main.assert_formula(ts.tr_formula())
        self.bad_lit = self.main.lit(ts.bad)
        # Init under an activation literal, non-fence part only
        self._fence_names = set(ts.meta.fence_var.values())
        self.init_act = self.main.new_act()
        init_nonfence = F.and_(
            F.eq(F.bv_var(n, self.widths[n]), F.bv_const(v, self.widths[n]))
            for n, v in ts.init_fixed if n not in self._fence_names)
        for cl in self._implication_clauses(self.init_act, init_nonfence):
            self.main.add_clause(cl)

        # init solver: Init alone, for init-exclusion checks and Cex witnesses
        self.init_ctx = SolverContext(seed=seed)
        for v in ts.state_vars:
            self.init_ctx.bv_bits(v.name, v.width)
        self.init_ctx.assert_formula(init_nonfence)
        self.init_bad_lit = self.init_ctx.lit(ts.bad)

        self.lemmas: list[Lemma] = []
        self.lemma_level: dict[int, float] = {}  # lemma.created -> level (inf ok)
        self.dead: set[int] = set()
        # frame membership is activated per exact level: one literal turns on
        # the clauses of every lemma sitting at that level, so queries assume
        # O(N) literals instead of O(#lemmas)
        self._level_act: dict[float, int] = {}
        self.N = 0
        self.queue: list[tuple[int, int, Obligation]] = []
        self.reach: list[ReachEntry] = []
        self._seq = 0
        self._push_agenda: list[Lemma] = []
        self._level_adds: dict[float, int] = {}   # lemma arrivals per level
        self._push_memo: dict[int, tuple[float, int]] = {}  # failed-push cache
        self._check_safe = True
        self._result: StepResult | None = None

        if self._solve_init([self.init_bad_lit]):
            raise RequireViolated("Init intersects Bad")

    # ------------------------------------------------------------------
    # plumbing

    def _log(self, rule: str, level: int | float | None = None,
             size: int | None = None) -> None:
        self.stats.bump(rule)
        if self.log_fn is not None:
            parts = [rule]
            if level is not None:
                parts.append(f"level={level}")
            if size is not None:
                parts.append(f"cube={size}")
            self.log_fn(" ".join(parts))

    def _implication_clauses(self, act: int, f: F.Node) -> list[list[int]]:
        """CNF of act -> f, flattening conjunctions."""
        if f.op == "and":
            out = []
            for a in f.args:
                out.extend(self._implication_clauses(act, a))
            return out
        return [[-act, self.main.lit(f)]]

    def _fence_assumps(self, ctx: SolverContext) -> list[int]:
        out = []
        for n, v in self.ts.init_fixed:
            if n in self._fence_names:
                bit = ctx.bv_bits(n, 1)[0]
                out.append(bit if v else -bit)
        return out

    def _bit(self, ctx: SolverContext, lit: BitLit, prime: bool) -> int:
        name = primed(lit.var) if prime else lit.var
        sat_lit = ctx.bv_bits(name, self.widths[lit.var])[lit.bit]
        return sat_lit if lit.value else -sat_lit

    def _cube_assumps(self, c: Cube, prime: bool) -> list[int]:
        return [self._bit(self.main, l, prime) for l in c]

    def _level_act_of(self, level: float) -> int:
        act = self._level_act.get(level)
        if act is None:
            act = self.main.new_act()
            self._level_act[level] = act
        return act

    def _attach_clause_at(self, c: Cube, level: float) -> None:
        self.main.add_clause([-self._level_act_of(level)]
                             + [-x for x in self._cube_assumps(c, False)])
        self._level_adds[level] = self._level_adds.get(level, 0) + 1

    def _frame_version(self, j: float) -> int:
        """Arrivals at levels >= j; a failed push stays failed until it grows."""
        return sum(n for lvl, n in self._level_adds.items() if lvl >= j)

    def _acts(self, level: int | float) -> list[int]:
        return [act for lvl, act in self._level_act.items() if lvl >= level]

    def _frame_assumps(self, j: int) -> list[int]:
        """Assumptions denoting F_j on current-state variables."""
        if j == 0:
            return [self.init_act] + self._fence_assumps(self.main)
        return self._acts(j)

    def _solve_main(self, assumptions: list[int]) -> bool:
        self.stats.queries += 1
        if self.deadline is not None and time.monotonic() > self.deadline:
            raise ResourceError("deadline exceeded")
        return self.main.solve(assumptions)

    def _solve_init(self, assumptions: list[int]) -> bool:
        self.stats.queries += 1
        return self.init_ctx.solve(self._fence_assumps(self.init_ctx) + assumptions)

    def _model_env(self, ctx: SolverContext, prime: bool = False) -> dict[str, int]:
        out = {}
        for v in self.ts.state_vars:
            name = primed(v.name) if prime else v.name
            out[v.name] = ctx.model_word(name, v.width)
        return out

    def _model_inputs(self) -> dict[str, int]:
        return {n: self.main.model_word(n, w) for n, w in self._input_widths.items()}

    def frame_lemmas(self, j: int | float) -> list[Lemma]:
        return [l for l in self.lemmas
                if l.created not in self.dead and self.lemma_level[l.created] >= j]

    # ------------------------------------------------------------------
    # Reach handling

    def _init_witness(self, c: Cube) -> dict[str, int] | None:
        """A concrete Init state inside the cube, if any."""
        if self._solve_init([self._bit(self.init_ctx, l, False) for l in c]):
            env = self._model_env(self.init_ctx)
            if not self.ts.satisfies_init(env):
                raise InternalError("init model violates Init")
            return env
        return None

    def _reach_hit(self, c: Cube) -> tuple[dict[str, int], int | None] | None:
        for idx, entry in enumerate(self.reach):
            if c.contains_state(entry.env):
                return entry.env, idx
        env = self._init_witness(c)
        if env is not None:
            return env, None
        return None

    def _reach_add(self, env: dict[str, int], pred: int | None,
                   inputs: dict[str, int] | None) -> int:
        if pred is not None:
            # spot-check the derivation link
            stepped = self.compiled.step_env(self.reach[pred].env, inputs or {})
            if stepped != env:
                raise InternalError("Reach derivation link does not replay")
        self.reach.append(ReachEntry(env, pred, inputs))
        return len(self.reach) - 1

    def _find_or_add_reach(self, env: dict[str, int]) -> int | None:
        for idx, entry in enumerate(self.reach):
            if entry.env == env:
                return idx
        if self.ts.satisfies_init(env):
            return self._reach_add(env, None, None)
        return None

    # ------------------------------------------------------------------
    # lemma machinery

    def _lemma_valid(self, c: Cube, j: int) -> bool:
        """Can clause not(c) join frame j?  (init, Reach, relative consecution)"""
        if self._solve_init([self._bit(self.init_ctx, l, False) for l in c]):
            return False
        for entry in self.reach:
            if c.contains_state(entry.env):
                return False
        act = self.main.new_act()
        self.main.add_clause([-act] + [-x for x in self._cube_assumps(c, False)])
        sat = self._solve_main(self._frame_assumps(j - 1) + [act]
                               + self._cube_assumps(c, True))
        self.main.kill_act(act)
        return not sat

    def _drop_order(self, c: Cube) -> list[BitLit]:
        """Try to shed data/cell literals first; control state generalizes best
        when kept until last."""
        kind = {v.name: v.kind for v in self.ts.state_vars}
        rank = {"data": 0, "cell": 1, "fence": 2, "spec": 3, "pc": 4}
        return sorted(c.lits, key=lambda l: (rank[kind[l.var]], l.var, l.bit))

    def _generalize(self, c: Cube, j: int) -> Cube:
        for lit in self._drop_order(c):
            if len(c) == 1:
                break
            if lit not in c.lits:
                continue
            candidate = c.without(lit)
            if self._lemma_valid(candidate, j):
                c = candidate
        return c

    def _add_lemma(self, c: Cube, j: int) -> Lemma:
        self._attach_clause_at(c, j)
        lemma = Lemma(c, self.stats.lemmas_added)
        self.stats.lemmas_added += 1
        self.lemmas.append(lemma)
        self.lemma_level[lemma.created] = j
        return lemma

    def _core_cube(self, c: Cube, prime: bool) -> Cube:
        """Sub-cube of c supported by the last UNSAT core."""
        core = self.main.core()
        keep = []
        for lit in c:
            if self._bit(self.main, lit, prime) in core:
                keep.append(lit)
        return Cube(tuple(keep))

    # ------------------------------------------------------------------
    # rules

    def pdr_step(self) -> StepResult:
        """Apply the next enabled rule under the deterministic schedule."""
        if self._result is not None:
            return self._result

        # Safe
        if self._check_safe:
            self._check_safe = False
            if not self._solve_main([self.bad_lit] + self._acts(math.inf)):
                self._log("Safe", self.N)
                self._result = StepResult("safe", "Safe", invariant=self.extract_invariant_unchecked())
                return self._result

        # queue processing
        if self.queue:
            _level, _seq, ob = heapq.heappop(self.queue)
            hit = self._reach_hit(ob.cube)
            if hit is not None:
                env, idx = hit
                self._log("Cex", ob.level, len(ob.cube))
                self._result = StepResult("leak", "Cex", leak=LeakHandle(ob, env, idx))
                return self._result
            return self._discharge(ob)

        # propagation sweep
        if self._push_agenda:
            return self._push_step()

        # Candidate / Unfold at the frontier
        if self._solve_main([self.bad_lit] + self._frame_assumps(self.N)):
            env = self._model_env(self.main)
            cube = cube_from_env(env, self.widths)
            self._push_obligation(Obligation(cube, self.N, self._next_seq(), None, None))
            self._log("Candidate", self.N, len(cube))
            return StepResult("continue", "Candidate")

        self.N += 1
        self._log("Unfold", self.N)
        self._push_agenda = sorted(
            (l for l in self.lemmas
             if l.created not in self.dead
             and 1 <= self.lemma_level[l.created] < self.N),
            key=lambda l: (self.lemma_level[l.created], l.created))
        if not self._push_agenda:
            self._maxind()
        return StepResult("continue", "Unfold")

    def _next_seq(self) -> int:
        self._seq += 1
        return self._seq

    def _push_obligation(self, ob: Obligation) -> None:
        heapq.heappush(self.queue, (ob.level, ob.seq, ob))

    def _discharge(self, ob: Obligation) -> StepResult:
        j = ob.level
        # F_{j-1} & Tr & m' first: UNSAT is both NewLemma and the ReQueue test
        assumps = self._frame_assumps(j - 1) + self._cube_assumps(ob.cube, True)
        if not self._solve_main(assumps):
            return self._block(ob, requeue_allowed=True)

        s_env = self._model_env(self.main)
        if ob.cube.contains_state(s_env):
            # self-loop predecessor; retry excluding the cube itself
            act = self.main.new_act()
            self.main.add_clause([-act] + [-x for x in self._cube_assumps(ob.cube, False)])
            sat = self._solve_main(assumps + [act])
            self.main.kill_act(act)
            if not sat:
                return self._block(ob, requeue_allowed=False)
            s_env = self._model_env(self.main)

        i_env = self._model_inputs()
        t_env = self._model_env(self.main, prime=True)

        pred_idx = self._find_or_add_reach(s_env)
        if pred_idx is not None:
            # Successor: the model step extends Reach one state toward Bad
            self._reach_add(t_env, pred_idx, i_env)
            self._push_obligation(ob)
            self._log("Successor", j, len(ob.cube))
            return StepResult("continue", "Successor")

        m0 = self._lift(s_env, i_env, ob.cube)
        child = Obligation(m0, j - 1, self._next_seq(), ob, i_env)
        self._push_obligation(child)
        self._push_obligation(ob)
        self._log("Predecessor", j - 1, len(m0))
        return StepResult("continue", "Predecessor")

    def _lift(self, s_env: dict[str, int], i_env: dict[str, int],
              parent: Cube) -> Cube:
        """Smallest model sub-cube with cube & inputs & Tr -> parent'."""
        s_cube = cube_from_env(s_env, self.widths)
        act = self.main.new_act()
        self.main.add_clause([-act] + [-x for x in self._cube_assumps(parent, True)])
        input_lits = []
        for n, w in self._input_widths.items():
            bits = self.main.bv_bits(n, w)
            v = i_env[n]
            input_lits.extend(b if (v >> i) & 1 else -b for i, b in enumerate(bits))
        sat = self._solve_main([act] + input_lits + self._cube_assumps(s_cube, False))
        self.main.kill_act(act)
        if sat:
            raise InternalError("lift query satisfiable; Tr not deterministic")
        return self._core_cube(s_cube, prime=False)

    def _block(self, ob: Obligation, requeue_allowed: bool) -> StepResult:
        j = ob.level
        seed = self._core_cube(ob.cube, prime=True)
        if len(seed) == 0 or not self._lemma_valid(seed, j):
            seed = ob.cube
        cube = self._generalize(seed, j)
        self._add_lemma(cube, j)
        self._log("NewLemma", j, len(cube))
        if requeue_allowed and j + 1 <= self.N:
            self._push_obligation(Obligation(ob.cube, j + 1, self._next_seq(),
                                             ob.parent, ob.inputs))
            self._log("ReQueue", j + 1, len(ob.cube))
        return StepResult("continue", "NewLemma")

    def _push_step(self) -> StepResult:
        """Apply one Push promotion; exhaust failed attempts silently."""
        while self._push_agenda:
            lemma = self._push_agenda.pop(0)
            if lemma.created in self.dead:
                continue
            j = self.lemma_level[lemma.created]
            if j == math.inf or j >= self.N:
                continue
            version = self._frame_version(j)
            if self._push_memo.get(lemma.created) == (j, version):
                continue
            c = lemma.cube
            if any(c.contains_state(e.env) for e in self.reach):
                continue
            if self._solve_main(self._frame_assumps(int(j))
                                + self._cube_assumps(c, True)):
                self._push_memo[lemma.created] = (j, version)
                continue
            self._push_memo.pop(lemma.created, None)
            self.lemma_level[lemma.created] = j + 1
            self._attach_clause_at(c, j + 1)
            self._push_agenda.append(lemma)  # may push further next round
            self._log("Push", j + 1, len(c))
            if not self._push_agenda:
                self._maxind()
            return StepResult("continue", "Push")
        self._maxind()
        return StepResult("continue", "Push")

    def _maxind(self) -> None:
        """Fold the first fixpoint frame into F_infinity."""
        for j in range(1, self.N):
            at_j = [l for l in self.lemmas
                    if l.created not in self.dead and self.lemma_level[l.created] == j]
            if at_j:
                continue
            promoted = 0
            for l in self.lemmas:
                if l.created in self.dead:
                    continue
                lvl = self.lemma_level[l.created]
                if j < lvl < math.inf:
                    self.lemma_level[l.created] = math.inf
                    self._attach_clause_at(l.cube, math.inf)
                    promoted += 1
            self._log("MaxIndSubset", j, promoted)
            break
        self._check_safe = True

    # ------------------------------------------------------------------
    # results

    def extract_invariant_unchecked(self) -> F.Node:
        parts = []
        for l in self.frame_lemmas(math.inf):
            lits = [F.bool_var(f"{x.var}@{x.bit}") for x in l.cube.lits]
            clause = F.or_([F.not_(v) if x.value else v
                            for v, x in zip(lits, l.cube.lits)])
            parts.append(clause)
        return F.and_(parts)

    def extract_invariant(self) -> F.Node:
        """Conjunction of F_infinity lemma clauses over per-bit booleans."""
        if self._result is None or self._result.kind != "safe":
            raise NotSafeError("engine has not reached a Safe verdict")
        return self._result.invariant

    def run(self, max_steps: int | None = None) -> StepResult:
        steps = 0
        while True:
            r = self.pdr_step()
            if r.kind != "continue":
                return r
            steps += 1
            if max_steps is not None and steps >= max_steps:
                return r

    # ------------------------------------------------------------------
    # trace reconstruction

    def reconstruct_execution(self, leak: LeakHandle) -> list[dict[str, int]]:
        """Concrete execution Init -> ... -> Bad, validated step by step."""
        prefix: list[dict[str, int]] = []
        idx = leak.reach_index
        chain: list[ReachEntry] = []
        while idx is not None:
            entry = self.reach[idx]
            chain.append(entry)
            idx = entry.pred
        chain.reverse()
        if chain:
            if not self.ts.satisfies_init(chain[0].env):
                raise InternalError("Reach chain does not start at Init")
            prefix = [chain[0].env]
            for entry in chain[1:]:
                stepped = self.compiled.step_env(prefix[-1], entry.inputs or {})
                if stepped != entry.env:
                    raise InternalError("Reach prefix fails Tr replay")
                prefix.append(entry.env)
            if prefix[-1] != leak.witness:
                raise InternalError("Reach chain does not end at the witness")
        else:
            if not self.ts.satisfies_init(leak.witness):
                raise InternalError("witness is not an Init state")
            prefix = [leak.witness]

        trace = list(prefix)
        ob: Obligation | None = leak.obligation
        cur = leak.witness
        if not ob.cube.contains_state(cur):
            raise InternalError("witness not in the leak obligation cube")
        while ob.parent is not None:
            cur = self.compiled.step_env(cur, ob.inputs or {})
            if not ob.parent.cube.contains_state(cur):
                raise InternalError("obligation suffix fails Tr replay")
            trace.append(cur)
            ob = ob.parent
        if not F.evaluate(self.ts.bad, trace[-1]):
            raise InternalError("reconstructed trace does not end in Bad")
        return trace

    # ------------------------------------------------------------------
    # repair-facing operations

    def reset_queue(self) -> None:
        self.queue = []
        self._log("ResetQ")

    def reset_reach(self) -> None:
        self.reach = []
        self._log("ResetReach")

    def apply_new_init(self, ts: TransitionSystem) -> None:
        """Swap in a system differing from the current one only in Init."""
        if ts.updates is not self.ts.updates or ts.bad is not self.ts.bad:
            raise InternalError("apply_new_init requires an identical Tr and Bad")
        self.ts = ts
        self.compiled = CompiledTs(ts)
        self._result = None
        self._check_safe = True

    def revalidate_frames(self) -> tuple[int, int]:
        """Re-admit lemmas against the new Init; returns (kept, dropped).

        Each lemma must pass (a) Init -> lemma and (b) F_{j-1} & Tr -> lemma'
        against the frames filtered to already re-admitted lemmas; failures
        demote level by level and drop below level 1.  F_infinity lemmas
        re-enter the leveled scheme at level N.  Afterwards N rolls back to
        the first frame no longer excluding Bad, restoring trace property(iv)
        that lemma dropping can break.
        """
        if self._solve_init([self.init_bad_lit]):
            raise RequireViolated("new Init intersects Bad")
        alive = [l for l in self.lemmas if l.created not in self.dead]
        old_level = {l.created: self.lemma_level[l.created] for l in alive}
        # stale clause copies at old levels must go; fresh activation
        # literals are minted as lemmas are re-admitted
        for act in self._level_act.values():
            self.main.kill_act(act)
        self._level_act = {}
        self._level_adds = {}
        self._push_memo = {}
        for l in alive:  # pending lemmas leave every frame until re-admitted
            self.lemma_level[l.created] = 0
        order = sorted(alive, key=lambda l: (min(old_level[l.created], self.N + 1),
                                             l.created))
        kept = 0
        dropped = 0
        for lemma in order:
            lvl = old_level[lemma.created]
            target = self.N if lvl == math.inf else int(min(lvl, self.N))
            admitted = None
            if not self._solve_init([self._bit(self.init_ctx, x, False)
                                     for x in lemma.cube]):
                while target >= 1:
                    if not self._solve_main(self._frame_assumps(target - 1)
                                            + self._cube_assumps(lemma.cube, True)):
                        admitted = target
                        break
                    target -= 1
            if admitted is None:
                self.dead.add(lemma.created)
                dropped += 1
            else:
                self.lemma_level[lemma.created] = admitted
                self._attach_clause_at(lemma.cube, admitted)
                kept += 1
        self.stats.lemmas_kept += kept
        self.stats.lemmas_dropped += dropped

        for j in range(1, self.N + 1):
            if self._solve_main([self.bad_lit] + self._acts(j)):
                self.N = j
                break
        self._push_agenda = []
        self._result = None
        self._check_safe = True
        return kept, dropped

    # ------------------------------------------------------------------
    # debug invariant checks (test builds)

    def check_frame_invariants(self) -> list[str]:
        """Violations of the four trace properties; empty when all hold."""
        problems = []
        if self._solve_init([self.init_bad_lit]):
            problems.append("F0 (Init) intersects Bad")
        for j in range(0, self.N):
            for lemma in self.frame_lemmas(j + 1):
                if self._solve_main(self._frame_assumps(j)
                                    + self._cube_assumps(lemma.cube, True)):
                    problems.append(f"F{j} & Tr does not imply lemma'@{j + 1}")
            if j >= 1 and self._solve_main([self.bad_lit] + self._acts(j)):
                problems.append(f"F{j} does not exclude Bad")
        return problems


def pdr_init(ts: TransitionSystem, seed: int = 0,
             log: Callable[[str], None] | None = None,
             deadline: float | None = None) -> Engine:
    """Fresh engine: N=0, F0=Init, empty queue, Reach=Init."""
    return Engine(ts, seed=seed, log=log, deadline=deadline)
