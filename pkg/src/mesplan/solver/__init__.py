"""LP core, cone cuts, branch-and-bound and model export."""

from .lp import LpResult, solve_lp
from .cones import CutPool, seed_initial_cuts, separate_cones
from .bnb import SolverConfig, SolveReport, solve_mip

__all__ = [
    "LpResult", "solve_lp",
    "CutPool", "seed_initial_cuts", "separate_cones",
    "SolverConfig", "SolveReport", "solve_mip",
]
