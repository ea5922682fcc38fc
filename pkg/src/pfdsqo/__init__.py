"""Partially feasible distributed SQO for two-block linearly constrained problems."""

from .bench import build_epd, build_hs118, find_feasible_start
from .problem import TwoBlockProblem, eval_objective, is_partially_feasible, measure_feasibility
from .qp import QpProblem, solve_qp
from .solver import SolverParams, SolveReport, TerminationReason, audit_complexity, kkt_residual, solve

__all__ = [
    "QpProblem",
    "SolveReport",
    "SolverParams",
    "TerminationReason",
    "TwoBlockProblem",
    "audit_complexity",
    "build_epd",
    "build_hs118",
    "eval_objective",
    "find_feasible_start",
    "is_partially_feasible",
    "kkt_residual",
    "measure_feasibility",
    "solve",
    "solve_qp",
]
