"""Logic layer: formulas, bit-blasting, the CDCL oracle, cubes, explicit search."""

from specfence.logic import formula
from specfence.logic.cdcl import ResourceError
from specfence.logic.cube import BitLit, Cube, cube_from_env
from specfence.logic.explicit import (
    BudgetExceeded,
    CompiledTs,
    ExplicitResult,
    explicit_reachable,
)
from specfence.logic.inductive import PreconditionError, generalize, primed
from specfence.logic.solver import Model, SolverContext, check_sat

__all__ = [
    "formula", "ResourceError", "BitLit", "Cube", "cube_from_env",
    "BudgetExceeded", "CompiledTs", "ExplicitResult", "explicit_reachable",
    "PreconditionError", "generalize", "primed",
    "Model", "SolverContext", "check_sat",
]
