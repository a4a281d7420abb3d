"""Comparison methods: hard-thresholding descent, quadratic penalty, direct
and mean-doubly ADM, and an l1-regularisation sweep."""

from __future__ import annotations

import dataclasses
import math
import time
from typing import Optional, Sequence

import numpy as np

from .convex_inner import WeightedL1Subproblem, Workspace, composite_minimize, solve_weighted_l1
from .convex_inner import WeightedL1Quad
from .core import (
    SolveResult,
    SparsityProblem,
    TraceRecord,
    _project_affine_zero,
    count_nonzero,
    polish_on_support,
    top_k_support,
)
from .projections import hard_threshold

__all__ = [
    "BaselineConfig",
    "BASELINE_METHODS",
    "DEFAULT_LAMBDA_GRID",
    "greedy_solve",
    "qpm_solve",
    "di_adm_solve",
    "md_adm_solve",
    "cvx_sweep_solve",
    "penalty_schedule",
]

BASELINE_METHODS = ("greedy", "qpm", "di_adm", "md_adm", "cvx_sweep")
DEFAULT_LAMBDA_GRID = tuple(2.0 ** e for e in range(-10, 11, 2))


@dataclasses.dataclass
class BaselineConfig:
    method: str = "qpm"
    penalty_growth: float = math.sqrt(10.0)
    cadence: int = 30
    beta0: float = 1.0
    lambda_grid: Sequence[float] = DEFAULT_LAMBDA_GRID
    mu: float = 0.01
    eps: float = 1e-6
    eps_x: float = 1e-6
    max_iter: int = 1000
    inner_tol: float = 1e-6
    inner_max_iter: int = 2000
    polish: bool = True

    def __post_init__(self):
        if self.method not in BASELINE_METHODS:
            raise ValueError(f"unknown baseline {self.method!r}")
        if self.penalty_growth <= 1 or self.cadence < 1:
            raise ValueError("penalty schedule must grow")


def penalty_schedule(beta0: float, growth: float, cadence: int, iteration: int) -> float:
    """Penalty in force after ``iteration`` completed iterations."""
    return beta0 * growth ** (iteration // cadence)


def _result(problem, x, method, trace, converged, t, info) -> SolveResult:
    z = problem.constraint_map.apply(x)
    l0 = count_nonzero(z)
    return SolveResult(x_final=x, objective_value=problem.objective.value(x), l0_achieved=l0,
                       complementarity_gap=0.0, outer_iterations=t,
                       converged=converged and l0 <= problem.k, method=method,
                       trace=trace, info=info)


def _polished(problem, x, cfg, ws=None):
    keep = top_k_support(problem.constraint_map.apply(x), problem.k)
    if cfg.polish:
        return polish_on_support(problem, x, keep, workspace=ws)
    return _project_affine_zero(problem.constraint_map, x, ~keep)


def greedy_solve(problem: SparsityProblem, config: Optional[BaselineConfig] = None,
                 x0=None) -> SolveResult:
    """Gradient step of length ``1/L_f`` followed by top-k projection."""
    cfg = config or BaselineConfig(method="greedy")
    obj, amap = problem.objective, problem.constraint_map
    if not obj.is_smooth:
        raise ValueError("greedy descent needs a smooth objective")
    if not amap.is_identity:
        raise ValueError("greedy descent projects x itself; A must be the identity")
    lip = obj.smooth_lipschitz
    if lip <= 0:
        raise ValueError("greedy descent needs a positive gradient Lipschitz constant")
    b = amap.offset
    k = int(math.floor(problem.k + 1e-9))
    x = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    fx = obj.value(x)
    trace = []
    t0 = time.perf_counter()
    converged = False
    t = 0
    for t in range(1, cfg.max_iter + 1):
        x_new = hard_threshold(x - obj.smooth_grad(x) / lip + b, k) - b
        f_new = obj.value(x_new)
        same_support = np.array_equal(x_new + b != 0, x + b != 0)
        dx = float(np.linalg.norm(x_new - x)) / max(1.0, float(np.linalg.norm(x_new)))
        x, f_prev, fx = x_new, fx, f_new
        trace.append(TraceRecord(t, fx, 0.0, lip, 1e3 * (time.perf_counter() - t0)))
        if same_support and (dx <= cfg.eps_x
                             or abs(f_prev - fx) <= cfg.eps * max(1.0, abs(fx))):
            converged = True
            break
    return _result(problem, x, "greedy", trace, converged, t, {"lipschitz_grad": lip})


def qpm_solve(problem: SparsityProblem, config: Optional[BaselineConfig] = None,
              x0=None) -> SolveResult:
    """Block coordinate descent on ``f(x) + beta/2 ||Ax + b - y||^2`` with
    ``y`` k-sparse; ``beta`` grows geometrically on a fixed cadence."""
    cfg = config or BaselineConfig(method="qpm")
    amap = problem.constraint_map
    k = int(math.floor(problem.k + 1e-9))
    ws = Workspace()
    x = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    beta = cfg.beta0
    trace = []
    t0 = time.perf_counter()
    converged = False
    t = 0
    for t in range(1, cfg.max_iter + 1):
        y = hard_threshold(amap.apply(x), k)
        sub = WeightedL1Subproblem(problem.objective, amap, w=0.0, q=beta, g=-beta * y,
                                   mu=cfg.mu, x0=x, tol=cfg.inner_tol,
                                   max_iter=cfg.inner_max_iter)
        x_new = solve_weighted_l1(sub, ws)
        resid = float(np.max(np.abs(amap.apply(x_new) - y), initial=0.0))
        dx = float(np.linalg.norm(x_new - x)) / max(1.0, float(np.linalg.norm(x_new)))
        x = x_new
        trace.append(TraceRecord(t, problem.objective.value(x), resid, beta,
                                 1e3 * (time.perf_counter() - t0)))
        if resid <= cfg.eps and dx <= cfg.eps_x:
            converged = True
            break
        beta = penalty_schedule(cfg.beta0, cfg.penalty_growth, cfg.cadence, t)
    x = _polished(problem, x, cfg, ws)
    return _result(problem, x, "qpm", trace, converged, t, {"beta_final": beta})


def _adm_iterations(problem, cfg, x0, method):
    amap = problem.constraint_map
    k = int(math.floor(problem.k + 1e-9))
    ws = Workspace()
    x = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    lam = np.zeros(problem.m)
    beta = cfg.beta0
    trace = []
    t0 = time.perf_counter()
    x_sum = np.zeros(problem.n)
    converged = False
    t = 0
    for t in range(1, cfg.max_iter + 1):
        y = hard_threshold(amap.apply(x) + lam / beta, k)
        sub = WeightedL1Subproblem(problem.objective, amap, w=0.0, q=beta,
                                   g=lam - beta * y, mu=cfg.mu, x0=x, tol=cfg.inner_tol,
                                   max_iter=cfg.inner_max_iter)
        x_new = solve_weighted_l1(sub, ws)
        r = amap.apply(x_new) - y
        lam = lam + beta * r
        resid = float(np.max(np.abs(r), initial=0.0))
        dx = float(np.linalg.norm(x_new - x)) / max(1.0, float(np.linalg.norm(x_new)))
        x = x_new
        x_sum += x
        trace.append(TraceRecord(t, problem.objective.value(x), resid, beta,
                                 1e3 * (time.perf_counter() - t0)))
        if resid <= cfg.eps and dx <= cfg.eps_x:
            converged = True
            break
        beta = penalty_schedule(cfg.beta0, cfg.penalty_growth, cfg.cadence, t)
    return x, x_sum / max(t, 1), trace, converged, t, beta, ws


def di_adm_solve(problem: SparsityProblem, config: Optional[BaselineConfig] = None,
                 x0=None) -> SolveResult:
    """ADM on the splitting ``y = Ax + b`` with ``y`` restricted to k-sparse vectors."""
    cfg = config or BaselineConfig(method="di_adm")
    x, _, trace, conv, t, beta, ws = _adm_iterations(problem, cfg, x0, "di_adm")
    x = _polished(problem, x, cfg, ws)
    return _result(problem, x, "di_adm", trace, conv, t, {"beta_final": beta})


def md_adm_solve(problem: SparsityProblem, config: Optional[BaselineConfig] = None,
                 x0=None) -> SolveResult:
    """Same iteration as :func:`di_adm_solve`; outputs the running mean of the
    iterates, projected onto its top-k support."""
    cfg = config or BaselineConfig(method="md_adm")
    _, x_mean, trace, conv, t, beta, ws = _adm_iterations(problem, cfg, x0, "md_adm")
    x = _polished(problem, x_mean, cfg, ws)
    return _result(problem, x, "md_adm", trace, conv, t, {"beta_final": beta})


def cvx_sweep_solve(problem: SparsityProblem, config: Optional[BaselineConfig] = None,
                    x0=None) -> SolveResult:
    """Solve ``f(x) + lam ||Ax + b||_1`` over the grid, threshold each solution
    to ``k`` entries and keep the lowest resulting objective."""
    cfg = config or BaselineConfig(method="cvx_sweep")
    amap = problem.constraint_map
    ws = Workspace()
    best = None
    trace = []
    t0 = time.perf_counter()
    x_warm = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    for i, lam in enumerate(sorted(cfg.lambda_grid, reverse=True), start=1):
        block = (WeightedL1Quad(np.full(problem.m, lam)), amap)
        res = composite_minimize(problem.objective, [block], 1e-8, x_warm,
                                 tol=cfg.inner_tol, max_iter=cfg.inner_max_iter,
                                 workspace=ws)
        x_warm = res.x
        x_cand = _polished(problem, res.x, cfg, ws)
        f_cand = problem.objective.value(x_cand)
        trace.append(TraceRecord(i, f_cand, 0.0, lam, 1e3 * (time.perf_counter() - t0)))
        if best is None or f_cand < best[0]:
            best = (f_cand, x_cand, lam)
    return _result(problem, best[1], "cvx_sweep", trace, True, len(trace),
                   {"best_lambda": best[2]})
