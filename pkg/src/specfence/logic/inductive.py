"""Inductive generalization of blocked cubes.

The primed copy of a state variable `x` is named `x'` throughout.
"""

from __future__ import annotations

from specfence.logic import formula as F
from specfence.logic.cube import BitLit, Cube
from specfence.logic.solver import SolverContext


class PreconditionError(Exception):
    """The negated cube is not inductive relative to the given frame."""


def primed(name: str) -> str:
    return name + "'"


def _widths(*roots: F.Node) -> dict[str, int]:
    out: dict[str, int] = {}
    for r in roots:
        for name, w in F.node_vars(r).items():
            out[name] = max(out.get(name, 0), w)
    return out


class _Checker:
    def __init__(self, relative_to: F.Node, trans: F.Node, init: F.Node, seed: int = 0):
        self.widths = _widths(relative_to, trans, init)
        self.step = SolverContext(seed=seed)
        self.step.assert_formula(relative_to)
        self.step.assert_formula(trans)
        self.init = SolverContext(seed=seed)
        self.init.assert_formula(init)

    def _bit(self, ctx: SolverContext, lit: BitLit, prime: bool) -> int:
        name = primed(lit.var) if prime else lit.var
        width = self.widths.get(lit.var, lit.bit + 1)
        sat_lit = ctx.bv_bits(name, max(width, lit.bit + 1))[lit.bit]
        return sat_lit if lit.value else -sat_lit

    def init_excludes(self, c: Cube) -> bool:
        """init -> not(c)"""
        return not self.init.solve([self._bit(self.init, l, False) for l in c])

    def relatively_inductive(self, c: Cube) -> bool:
        """relative_to & not(c) & trans & c' unsatisfiable"""
        act = self.step.new_act()
        self.step.add_clause([-act] + [-self._bit(self.step, l, False) for l in c])
        assumptions = [act] + [self._bit(self.step, l, True) for l in c]
        sat = self.step.solve(assumptions)
        self.step.kill_act(act)
        return not sat


def generalize(c: Cube, relative_to: F.Node, trans: F.Node, init: F.Node,
               seed: int = 0) -> Cube:
    """Shrink a blocked cube while keeping its negation relatively inductive.

    Requires (and re-checks) that not(c) is already inductive relative to
    `relative_to` and excluded by `init`; each literal drop is re-verified
    against both conditions.  The result is subset-minimal with respect to
    single-literal drops.
    """
    chk = _Checker(relative_to, trans, init, seed=seed)
    if not chk.init_excludes(c):
        raise PreconditionError("init does not exclude the cube")
    if not chk.relatively_inductive(c):
        raise PreconditionError("negated cube is not relatively inductive")

    for lit in list(c.lits):
        if len(c) == 1:
            break
        candidate = c.without(lit)
        if chk.init_excludes(candidate) and chk.relatively_inductive(candidate):
            c = candidate
    return c
