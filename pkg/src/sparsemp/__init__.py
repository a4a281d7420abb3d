"""Sparsity-constrained minimization ``min f(x) s.t. ||Ax + b||_0 <= k`` via
exact-penalty and alternating-direction MPEC solvers, with baselines,
application adapters and an experiment harness."""

from .baselines import (
    BaselineConfig,
    cvx_sweep_solve,
    di_adm_solve,
    greedy_solve,
    md_adm_solve,
    qpm_solve,
)
from .convex_inner import ObjectiveSpec, composite_minimize, solve_weighted_l1
from .core import SolveResult, SolverConfig, SparsityProblem
from .linops import AffineMap, RankDeficientError, estimate_sigma_min
from .mpec import adm_solve, epm_solve
from .projections import DiagonalQP, breakpoint_solve, capped_simplex_project

__version__ = "0.1.0"

__all__ = [
    "AffineMap",
    "BaselineConfig",
    "DiagonalQP",
    "ObjectiveSpec",
    "RankDeficientError",
    "SolveResult",
    "SolverConfig",
    "SparsityProblem",
    "adm_solve",
    "breakpoint_solve",
    "capped_simplex_project",
    "composite_minimize",
    "cvx_sweep_solve",
    "di_adm_solve",
    "epm_solve",
    "estimate_sigma_min",
    "greedy_solve",
    "md_adm_solve",
    "qpm_solve",
    "solve_weighted_l1",
]
