"""Linear model IR, branch-and-bound solver and MPS interchange."""
from .bnb import (
    FEASIBLE_GAP,
    INFEASIBLE,
    NO_INCUMBENT,
    OPTIMAL,
    MilpSolution,
    NumericalError,
    UnboundedError,
    solve,
    solve_lp_relaxation,
)
from .model import BINARY, CONTINUOUS, MilpModel, ModelError
from .mps import MpsNameError, export_mps, parse_mps

export_standard_format = export_mps

__all__ = [
    "BINARY", "CONTINUOUS", "FEASIBLE_GAP", "INFEASIBLE", "NO_INCUMBENT", "OPTIMAL",
    "MilpModel", "MilpSolution", "ModelError", "MpsNameError", "NumericalError",
    "UnboundedError", "export_mps", "export_standard_format", "parse_mps", "solve",
    "solve_lp_relaxation",
]
