"""RSMA resource allocation for a LEO downlink sharing spectrum with GEO."""

from .assign import greedy_assign, random_assign
from .model import (AllocationState, Assignment, AssignmentError, ChannelSet, ModelError,
                    RateReport, SystemConfig, evaluate)
from .solver import DualState, SolveReport, SolverOptions, solve_fix_p, solve_opt, solve_rand_x

__all__ = [
    "AllocationState", "Assignment", "AssignmentError", "ChannelSet", "DualState",
    "ModelError", "RateReport", "SolveReport", "SolverOptions", "SystemConfig", "evaluate",
    "greedy_assign", "random_assign", "solve_fix_p", "solve_opt", "solve_rand_x",
]

__version__ = "0.1.0"
