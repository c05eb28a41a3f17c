"""Conflict-driven clause learning SAT solver.

MiniSat-style: two-watched-literal propagation, 1UIP learning, VSIDS
activities with phase saving, Luby restarts, incremental clause addition
between solves, and assumption-based solving with final-conflict cores
(the core is a subset of the assumptions, used for cube generalization).

Fully deterministic for a fixed seed: the seed only perturbs initial
variable activities, and ties break on variable index.
"""

from __future__ import annotations

import heapq
import random


class ResourceError(Exception):
    """Conflict budget exceeded."""


def _luby(i: int) -> int:
    # Luby restart sequence 1,1,2,1,1,2,4,...
    k = 1
    while (1 << (k + 1)) - 1 < i + 1:
        k += 1
    while (1 << k) - 1 != i + 1:
        i = i - (1 << (k - 1)) + 1
        k = 1
        while (1 << (k + 1)) - 1 < i + 1:
            k += 1
    return 1 << (k - 1)


class Solver:
    def __init__(self, seed: int = 0, conflict_budget: int | None = None):
        self.nvars = 0
        self.clauses: list[list[int] | None] = []  # problem + learned; refs stable
        self.learned_refs: set[int] = set()
        self.watches: list[list[int]] = [[], []]  # watch-index -> clause refs
        self.assign: list[int] = [0]         # var -> 0 unassigned / 1 / -1
        self.level: list[int] = [0]
        self.reason: list[int | None] = [None]  # var -> clause ref
        self.trail: list[int] = []
        self.trail_lim: list[int] = []
        self.qhead = 0
        self.activity: list[float] = [0.0]
        self.var_inc = 1.0
        self.phase: list[bool] = [False]
        self.heap: list[tuple[float, int]] = []
        self.ok = True
        self.rng = random.Random(seed)
        self.seed = seed
        self.conflict_budget = conflict_budget
        self.stats = {"solves": 0, "conflicts": 0, "decisions": 0, "propagations": 0}
        self._core: set[int] = set()
        self._cla_act: dict[int, float] = {}
        self._cla_inc = 1.0
        self._max_learned = 6000

    # -- variables

    def new_var(self) -> int:
        self.nvars += 1
        v = self.nvars
        self.assign.append(0)
        self.level.append(0)
        self.reason.append(None)
        act = 1e-9 * self.rng.random() if self.seed else 0.0
        self.activity.append(act)
        self.phase.append(False)
        self.watches.append([])
        self.watches.append([])
        self.heap.append((-self.activity[v], v))
        return v

    def _widx(self, lit: int) -> int:
        return 2 * lit if lit > 0 else -2 * lit + 1

    def value(self, lit: int) -> int:
        a = self.assign[abs(lit)]
        return a if lit > 0 else -a

    def decision_level(self) -> int:
        return len(self.trail_lim)

    # -- clause management

    def add_clause(self, lits: list[int]) -> None:
        """Add a problem clause; only legal at decision level 0."""
        if not self.ok:
            return
        self.cancel_until(0)
        out: list[int] = []
        seen: set[int] = set()
        for lit in lits:
            if lit in seen:
                continue
            if -lit in seen:
                return  # tautology
            if self.value(lit) == 1:
                return  # satisfied at level 0
            if self.value(lit) == -1:
                continue  # falsified at level 0
            seen.add(lit)
            out.append(lit)
        if not out:
            self.ok = False
            return
        if len(out) == 1:
            self._enqueue(out[0], None)
            if self._propagate() is not None:
                self.ok = False
            return
        ref = len(self.clauses)
        self.clauses.append(out)
        self.watches[self._widx(-out[0])].append(ref)
        self.watches[self._widx(-out[1])].append(ref)

    def _attach_learned(self, lits: list[int]) -> int | None:
        if len(lits) == 1:
            return None
        ref = len(self.clauses)
        self.clauses.append(lits)
        self.learned_refs.add(ref)
        self._cla_act[ref] = self._cla_inc
        self.watches[self._widx(-lits[0])].append(ref)
        self.watches[self._widx(-lits[1])].append(ref)
        return ref

    # -- trail

    def _enqueue(self, lit: int, reason_ref: int | None) -> None:
        v = lit if lit > 0 else -lit
        self.assign[v] = 1 if lit > 0 else -1
        self.level[v] = len(self.trail_lim)
        self.reason[v] = reason_ref
        self.trail.append(lit)

    def cancel_until(self, lvl: int) -> None:
        if self.decision_level() <= lvl:
            return
        bound = self.trail_lim[lvl]
        for i in range(len(self.trail) - 1, bound - 1, -1):
            lit = self.trail[i]
            v = abs(lit)
            self.phase[v] = lit > 0
            self.assign[v] = 0
            self.reason[v] = None
            heapq.heappush(self.heap, (-self.activity[v], v))
        del self.trail[bound:]
        del self.trail_lim[lvl:]
        self.qhead = len(self.trail)

    # -- propagation

    def _propagate(self) -> int | None:
        """Unit propagation; returns a conflicting clause ref or None."""
        watches = self.watches
        clauses = self.clauses
        assign = self.assign
        trail = self.trail
        nprops = 0
        while self.qhead < len(trail):
            p = trail[self.qhead]
            self.qhead += 1
            nprops += 1
            wl = watches[2 * p if p > 0 else -2 * p + 1]  # clauses watching -p
            i = 0
            j = 0
            n = len(wl)
            while i < n:
                ref = wl[i]
                i += 1
                c = clauses[ref]
                # ensure c[0] is the other watch
                if c[0] == -p:
                    c[0], c[1] = c[1], c[0]
                first = c[0]
                a0 = assign[first] if first > 0 else -assign[-first]
                if a0 == 1:
                    wl[j] = ref
                    j += 1
                    continue
                found = False
                for k in range(2, len(c)):
                    lk = c[k]
                    if (assign[lk] if lk > 0 else -assign[-lk]) != -1:
                        c[1], c[k] = lk, c[1]
                        # watch list of -lk picks up this clause
                        watches[2 * lk + 1 if lk > 0 else -2 * lk].append(ref)
                        found = True
                        break
                if found:
                    continue
                wl[j] = ref
                j += 1
                if a0 == -1:
                    # conflict
                    while i < n:
                        wl[j] = wl[i]
                        j += 1
                        i += 1
                    del wl[j:]
                    self.stats["propagations"] += nprops
                    return ref
                v = first if first > 0 else -first
                assign[v] = 1 if first > 0 else -1
                self.level[v] = len(self.trail_lim)
                self.reason[v] = ref
                trail.append(first)
            del wl[j:]
        self.stats["propagations"] += nprops
        return None

    # -- heuristics

    def _bump_var(self, v: int) -> None:
        self.activity[v] += self.var_inc
        if self.activity[v] > 1e100:
            for u in range(1, self.nvars + 1):
                self.activity[u] *= 1e-100
            self.var_inc *= 1e-100
        if self.assign[v] == 0:
            heapq.heappush(self.heap, (-self.activity[v], v))

    def _decay(self) -> None:
        self.var_inc /= 0.95
        self._cla_inc /= 0.999

    def _pick_branch_var(self) -> int | None:
        while self.heap:
            negact, v = heapq.heappop(self.heap)
            if self.assign[v] == 0 and -negact == self.activity[v]:
                return v
        for v in range(1, self.nvars + 1):
            if self.assign[v] == 0:
                return v
        return None

    # -- conflict analysis

    def _analyze(self, confl: int) -> tuple[list[int], int]:
        learned: list[int] = [0]
        seen: set[int] = set()
        counter = 0
        p = 0
        idx = len(self.trail) - 1
        cur_level = self.decision_level()
        ref: int | None = confl
        while True:
            c = self.clauses[ref]
            if ref in self.learned_refs:
                self._cla_act[ref] = self._cla_act.get(ref, 0.0) + self._cla_inc
            for q in c:
                if q == p:
                    continue
                v = abs(q)
                if v in seen or self.level[v] == 0:
                    continue
                seen.add(v)
                self._bump_var(v)
                if self.level[v] == cur_level:
                    counter += 1
                else:
                    learned.append(q)
            while abs(self.trail[idx]) not in seen:
                idx -= 1
            p = self.trail[idx]
            v = abs(p)
            seen.discard(v)
            idx -= 1
            counter -= 1
            if counter == 0:
                break
            ref = self.reason[v]
        learned[0] = -p
        if len(learned) == 1:
            return learned, 0
        # place the highest-level remaining literal at position 1
        max_i = 1
        for i in range(2, len(learned)):
            if self.level[abs(learned[i])] > self.level[abs(learned[max_i])]:
                max_i = i
        learned[1], learned[max_i] = learned[max_i], learned[1]
        return learned, self.level[abs(learned[1])]

    def _final_core(self, start_lits: list[int]) -> set[int]:
        core: set[int] = set()
        seen: set[int] = set()
        stack = [abs(l) for l in start_lits]
        while stack:
            v = stack.pop()
            if v in seen or self.level[v] == 0:
                continue
            seen.add(v)
            ref = self.reason[v]
            if ref is None:
                core.add(v if self.assign[v] > 0 else -v)
            else:
                stack.extend(abs(q) for q in self.clauses[ref])
        return core

    # -- clause DB reduction

    def _reduce_db(self) -> None:
        if len(self.learned_refs) <= self._max_learned:
            return
        locked = {self.reason[abs(l)] for l in self.trail if self.reason[abs(l)] is not None}
        by_act = sorted(self.learned_refs, key=lambda r: (self._cla_act.get(r, 0.0), -r))
        for r in by_act[:len(by_act) // 2]:
            c = self.clauses[r]
            if r in locked or len(c) <= 2:
                continue
            for w in (self._widx(-c[0]), self._widx(-c[1])):
                try:
                    self.watches[w].remove(r)
                except ValueError:
                    pass
            self.clauses[r] = None  # tombstone; refs are stable
            self.learned_refs.discard(r)
            self._cla_act.pop(r, None)

    # -- main search

    def solve(self, assumptions: list[int] = ()) -> bool:
        """Solve under assumptions; after False, core() holds the used subset."""
        self.stats["solves"] += 1
        self._core = set()
        if not self.ok:
            return False
        self.cancel_until(0)
        if self._propagate() is not None:
            self.ok = False
            return False
        assumptions = list(assumptions)
        n_assumed = len(assumptions)
        conflicts_here = 0
        restart_outer = 0
        restart_limit = 100 * _luby(restart_outer)

        while True:
            confl = self._propagate()
            if confl is not None:
                self.stats["conflicts"] += 1
                conflicts_here += 1
                if self.conflict_budget is not None and conflicts_here > self.conflict_budget:
                    self.cancel_until(0)
                    raise ResourceError(f"conflict budget {self.conflict_budget} exceeded")
                if self.decision_level() == 0:
                    self.ok = False
                    return False
                if self.decision_level() <= n_assumed:
                    self._core = self._final_core(list(self.clauses[confl]))
                    self.cancel_until(0)
                    return False
                learned, bt = self._analyze(confl)
                self.cancel_until(max(bt, 0))
                ref = self._attach_learned(learned)
                self._enqueue(learned[0], ref)
                self._decay()
                if conflicts_here % 1000 == 0:
                    self._reduce_db()
                if conflicts_here >= restart_limit:
                    restart_outer += 1
                    restart_limit = conflicts_here + 100 * _luby(restart_outer)
                    self.cancel_until(0)
                continue

            if self.decision_level() < len(assumptions):
                a = assumptions[self.decision_level()]
                va = self.value(a)
                if va == 1:
                    self.trail_lim.append(len(self.trail))  # empty level keeps indexing
                elif va == -1:
                    core = self._final_core([a])
                    core.add(a)
                    self._core = core
                    self.cancel_until(0)
                    return False
                else:
                    self.trail_lim.append(len(self.trail))
                    self._enqueue(a, None)
                continue

            v = self._pick_branch_var()
            if v is None:
                return True
            self.stats["decisions"] += 1
            self.trail_lim.append(len(self.trail))
            self._enqueue(v if self.phase[v] else -v, None)

    def core(self) -> set[int]:
        return set(self._core)

    def model_value(self, lit: int) -> bool:
        """Value of a literal in the current model (unassigned reads False)."""
        return self.value(lit) == 1
