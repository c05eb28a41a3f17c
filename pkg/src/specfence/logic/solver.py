"""Satisfiability front-end: one-shot check_sat and an incremental context."""

from __future__ import annotations

from dataclasses import dataclass

from specfence.logic import formula as F
from specfence.logic.blast import BitBlaster
from specfence.logic.cdcl import ResourceError, Solver

__all__ = ["Model", "SolverContext", "check_sat", "ResourceError"]


@dataclass(frozen=True)
class Model:
    """Total assignment over the queried variables, word-level values."""

    values: dict[str, int]  # bv vars -> int, bool vars -> 0/1

    def __getitem__(self, name: str) -> int:
        return self.values[name]

    def bit(self, name: str, i: int) -> bool:
        return bool((self.values[name] >> i) & 1)


class SolverContext:
    """Incremental bit-blasting context over one CDCL instance.

    Formulas asserted here are permanent.  Queries pass assumption literals;
    `lit`/`bits` expose Tseitin definitions without asserting them.
    """

    def __init__(self, seed: int = 0, conflict_budget: int | None = None):
        self.sat = Solver(seed=seed, conflict_budget=conflict_budget)
        self.blaster = BitBlaster(self.sat)

    # -- building

    def assert_formula(self, f: F.Node) -> None:
        self.blaster.assert_formula(f)

    def add_clause(self, lits: list[int]) -> None:
        self.sat.add_clause(lits)

    def lit(self, f: F.Node) -> int:
        return self.blaster.lit(f)

    def bv_bits(self, name: str, width: int) -> tuple[int, ...]:
        return self.blaster.bv_bits(name, width)

    def new_act(self) -> int:
        """Fresh activation variable for a retractable clause."""
        return self.sat.new_var()

    def kill_act(self, act: int) -> None:
        self.sat.add_clause([-act])

    # -- solving

    def solve(self, assumptions: list[int] = ()) -> bool:
        return self.sat.solve(list(assumptions))

    def core(self) -> set[int]:
        return self.sat.core()

    def model_word(self, name: str, width: int) -> int:
        bits = self.bv_bits(name, width)
        v = 0
        for i, b in enumerate(bits):
            if self.sat.model_value(b):
                v |= 1 << i
        return v

    def model_env(self, vars_with_widths: dict[str, int]) -> dict[str, int]:
        env = {}
        for name, w in vars_with_widths.items():
            if w == 0:
                env[name] = int(self.sat.model_value(self.blaster.bool_lit(name)))
            else:
                env[name] = self.model_word(name, w)
        return env


def check_sat(f: F.Node, seed: int = 0,
              conflict_budget: int | None = None) -> Model | None:
    """Decide satisfiability of a well-typed formula.

    Returns a total Model when satisfiable (validated by evaluation against
    the formula), or None when unsatisfiable.
    """
    ctx = SolverContext(seed=seed, conflict_budget=conflict_budget)
    ctx.assert_formula(f)
    if not ctx.solve():
        return None
    env = ctx.model_env(F.node_vars(f))
    assert F.evaluate(f, env), "model does not satisfy the queried formula"
    return Model(env)
