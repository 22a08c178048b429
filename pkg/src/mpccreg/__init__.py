"""Regularization methods for mathematical programs with complementarity constraints."""

from .driver import DriverConfig, SolveResult, outer_solve
from .model import MpccProblem, load_problem
from .regularize import Scheme, build_regularized
from .sqp import SqpConfig, sqp_solve
from .stationarity import MpccMultipliers, check_mpcc_licq, check_strong_stationarity
from .suite import builtin_suite, enumerate_branches

__all__ = [
    "DriverConfig",
    "MpccMultipliers",
    "MpccProblem",
    "Scheme",
    "SolveResult",
    "SqpConfig",
    "build_regularized",
    "builtin_suite",
    "check_mpcc_licq",
    "check_strong_stationarity",
    "enumerate_branches",
    "load_problem",
    "outer_solve",
    "sqp_solve",
]
