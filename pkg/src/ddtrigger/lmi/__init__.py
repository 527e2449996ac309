"""LMI modelling layer and dense feasibility solver."""
from .expr import Affine, bmat, sym
from .problem import (AffineConstraint, BadProblem, ConstraintValue, LmiProblem,
                      MissingVariable, VarSpec, eval_constraints)
from .solver import (INFEASIBLE, STRICT, UNKNOWN, Feasibility, NumericalBreakdown,
                     default_delta, solve_feasibility)

__all__ = [
    "Affine", "bmat", "sym", "AffineConstraint", "BadProblem", "ConstraintValue",
    "LmiProblem", "MissingVariable", "VarSpec", "eval_constraints", "INFEASIBLE",
    "STRICT", "UNKNOWN", "Feasibility", "NumericalBreakdown", "default_delta",
    "solve_feasibility",
]
