"""Exact penalty (EPM) and alternating direction (ADM) solvers for the
complementarity reformulations of ``min f(x) s.t. ||Ax + b||_0 <= k``.

EPM works on the non-separable form ``||Ax||_1 = <Ax, u>`` with ``u`` in the
capped l1 ball; ADM on the separable form ``|Ax| * v = 0`` with ``v`` in the
budgeted unit box.
"""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from typing import Optional, Union

import numpy as np

from .convex_inner import WeightedL1Subproblem, Workspace, solve_weighted_l1
from .core import (
    SolveResult,
    SolverConfig,
    SparsityProblem,
    TraceRecord,
    count_nonzero,
    polish_on_support,
    snap_to_support,
    solve_unconstrained,
    top_k_support,
)
from .linops import RankDeficientError, estimate_sigma_min
from .projections import capped_simplex_project, v_subproblem_solve

__all__ = [
    "EpmState",
    "AdmState",
    "KKTResiduals",
    "epm_solve",
    "adm_solve",
    "kkt_residuals",
    "penalty_cap",
    "penalty_update_bound",
    "augmented_lagrangian",
]

log = logging.getLogger(__name__)


@dataclasses.dataclass
class EpmState:
    x: np.ndarray
    u: np.ndarray
    rho: float
    t: int = 0


@dataclasses.dataclass
class AdmState:
    x: np.ndarray
    v: np.ndarray
    pi: np.ndarray
    alpha: float
    t: int = 0


@dataclasses.dataclass
class KKTResiduals:
    stationarity: float
    feasibility: float
    dual_feasibility: float

    def max(self) -> float:
        return max(self.stationarity, self.feasibility, self.dual_feasibility)


def penalty_cap(problem: SparsityProblem, config: SolverConfig):
    """Return ``(cap, sigma, rank_ok)`` for the exactness threshold ``L / sigma(A)``.

    The cap sits a hair above the threshold so that it is strictly exceeded.
    Without a usable ``sigma`` the cap falls back to ``config.rho_max``.
    """
    override = problem.sigma_override if problem.sigma_override is not None \
        else config.sigma_override
    try:
        sigma = estimate_sigma_min(problem.constraint_map, override=override).sigma_min
    except RankDeficientError:
        log.warning("A has no right inverse (%dx%d); penalty capped at rho_max=%g",
                    problem.m, problem.n, config.rho_max)
        return config.rho_max, float("nan"), False
    lip = problem.objective.lipschitz_f
    if lip <= 0:
        raise ValueError("objective.lipschitz_f must be positive for MPEC solvers")
    return (1.0 + config.cap_margin) * lip / sigma, sigma, True


def penalty_update_bound(lipschitz: float, delta: float, eps: float, rho0: float) -> int:
    """``ceil((ln(L delta) - ln(eps rho0)) / ln 2)`` penalty doublings."""
    return int(math.ceil((math.log(lipschitz * delta) - math.log(eps * rho0)) / math.log(2.0)))


def augmented_lagrangian(problem: SparsityProblem, x, v, pi, alpha: float) -> float:
    """``f(x) + <|Ax+b| v, pi> + alpha/2 || |Ax+b| v ||^2`` (``v`` assumed feasible)."""
    r = np.abs(problem.constraint_map.apply(x)) * v
    return problem.objective.value(x) + float(r @ pi) + 0.5 * alpha * float(r @ r)


def _rel_change(new, old) -> float:
    return float(np.linalg.norm(new - old)) / max(1.0, float(np.linalg.norm(new)))


def _big_count(z, snap_tol) -> int:
    return int(np.count_nonzero(np.abs(z) > snap_tol * (1.0 + np.abs(z).max(initial=0.0))))


def _vacuous(problem, x0, method) -> SolveResult:
    # k >= m: the constraint cannot bind, so no penalty or multiplier is needed
    x = solve_unconstrained(problem, np.zeros(problem.n) if x0 is None else x0)
    return SolveResult(x_final=x, objective_value=problem.objective.value(x),
                       l0_achieved=count_nonzero(problem.constraint_map.apply(x)),
                       complementarity_gap=0.0, outer_iterations=0, converged=True,
                       method=method, trace=[], info={"vacuous": True, "completed": False})


def _finish(problem, config, x, method, trace, converged, t, gap, info) -> SolveResult:
    x_out = x
    if converged:
        x_out, snapped = snap_to_support(problem, x, config.snap_tol)
        info["snapped"] = snapped
    z = problem.constraint_map.apply(x_out)
    l0 = count_nonzero(z)
    if l0 > problem.k:
        converged = False
    info["completed"] = False
    if not converged:
        info["x_last"] = x
        if config.complete_unconverged and l0 > problem.k:
            # feasible completion: best x on the top-k support of the last iterate
            keep = top_k_support(problem.constraint_map.apply(x), problem.k)
            x_out = polish_on_support(problem, x, keep)
            l0 = count_nonzero(problem.constraint_map.apply(x_out))
            info["completed"] = True
    return SolveResult(x_final=x_out, objective_value=problem.objective.value(x_out),
                       l0_achieved=l0, complementarity_gap=gap, outer_iterations=t,
                       converged=converged, method=method, trace=trace, info=info)


def epm_solve(problem: SparsityProblem, config: Optional[SolverConfig] = None,
              x0=None) -> SolveResult:
    """Exact penalty method.

    Each iteration takes a proximal x-step on
    ``f(x) + rho (||Ax+b||_1 - <Ax+b, u>)``, projects
    ``rho (Ax+b) / mu`` onto the capped l1 ball for ``u``, and doubles ``rho``
    every ``T`` iterations up to ``L / sigma(A)``.
    """
    cfg = config or SolverConfig()
    amap, k = problem.constraint_map, problem.k
    if k >= problem.m:
        return _vacuous(problem, x0, "mpec_epm")
    cap, sigma, rank_ok = penalty_cap(problem, cfg)
    ws = Workspace()
    x = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    u = np.zeros(problem.m)
    rho = min(cfg.rho0, cap)
    updates = 0
    max_norm = float(np.linalg.norm(x))
    trace = []
    t0 = time.perf_counter()
    converged = False
    gap = math.inf
    t = 0
    for t in range(1, cfg.max_outer + 1):
        sub = WeightedL1Subproblem(problem.objective, amap, w=rho, q=0.0, g=-rho * u,
                                   mu=cfg.mu, x0=x, tol=cfg.inner_tol,
                                   max_iter=cfg.inner_max_iter)
        x_new = solve_weighted_l1(sub, ws)
        z = amap.apply(x_new)
        u = capped_simplex_project(rho * z / cfg.mu, k)
        gap = float(np.sum(np.abs(z)) - z @ u)
        dx = _rel_change(x_new, x)
        x = x_new
        max_norm = max(max_norm, float(np.linalg.norm(x)))
        trace.append(TraceRecord(t, problem.objective.value(x), gap, rho,
                                 1e3 * (time.perf_counter() - t0)))
        if gap <= cfg.eps_gap and dx <= cfg.eps_x and _big_count(z, cfg.snap_tol) <= k:
            converged = True
            break
        if t % cfg.T == 0 and rho < cap:
            rho = min(cap, 2.0 * rho)
            updates += 1
    info = {
        "rho_final": rho, "rho_cap": cap, "sigma": sigma, "rank_ok": rank_ok,
        "penalty_updates": updates, "max_x_norm": max_norm, "u": u,
        "state": EpmState(x, u, rho, t),
    }
    return _finish(problem, cfg, x, "mpec_epm", trace, converged, t, gap, info)


def adm_solve(problem: SparsityProblem, config: Optional[SolverConfig] = None,
              x0=None) -> SolveResult:
    """Proximal alternating direction method on the augmented Lagrangian
    ``f(x) + <|Ax+b| v, pi> + alpha/2 || |Ax+b| v ||^2``.

    Starts from ``v = 1``, ``pi = eta``; the multiplier only grows.
    """
    cfg = config or SolverConfig()
    amap, k = problem.constraint_map, problem.k
    if k >= problem.m:
        return _vacuous(problem, x0, "mpec_adm")
    alpha, mu = cfg.alpha, cfg.mu
    ws = Workspace()
    x = np.zeros(problem.n) if x0 is None else np.asarray(x0, dtype=float).copy()
    v = np.ones(problem.m)
    pi = np.full(problem.m, cfg.eta)
    lag = augmented_lagrangian(problem, x, v, pi, alpha)
    max_norm = float(np.linalg.norm(x))
    trace = []
    t0 = time.perf_counter()
    converged = False
    comp = math.inf
    t = 0
    for t in range(1, cfg.max_outer + 1):
        sub = WeightedL1Subproblem(problem.objective, amap, w=pi * v, q=alpha * v * v,
                                   g=0.0, mu=mu, x0=x, tol=cfg.inner_tol,
                                   max_iter=cfg.inner_max_iter)
        x_new = solve_weighted_l1(sub, ws)
        z = amap.apply(x_new)
        az = np.abs(z)
        v_new = v_subproblem_solve(az, pi, v, alpha, mu, k)
        pi_new = pi + alpha * (az * v_new)
        lag_new = augmented_lagrangian(problem, x_new, v_new, pi_new, alpha)
        dx2 = float(np.sum((x_new - x) ** 2))
        dv2 = float(np.sum((v_new - v) ** 2))
        dpi2 = float(np.sum((pi_new - pi) ** 2))
        dpi_min = float(np.min(pi_new - pi, initial=0.0))
        descent_slack = lag_new - (lag - 0.5 * mu * dx2 - 0.5 * mu * dv2 + dpi2 / alpha)
        comp = float(np.max(az * v_new)) if az.size else 0.0
        dx = _rel_change(x_new, x)
        x, v, pi, lag = x_new, v_new, pi_new, lag_new
        max_norm = max(max_norm, float(np.linalg.norm(x)))
        trace.append(TraceRecord(
            t, problem.objective.value(x), comp, float(pi.max()),
            1e3 * (time.perf_counter() - t0),
            extras={"lagrangian": lag, "descent_slack": descent_slack,
                    "pi_min_increment": dpi_min}))
        if comp <= cfg.eps_gap and dx <= cfg.eps_x and _big_count(z, cfg.snap_tol) <= k:
            converged = True
            break
    info = {"max_x_norm": max_norm, "v": v, "pi": pi,
            "state": AdmState(x, v, pi, alpha, t)}
    return _finish(problem, cfg, x, "mpec_adm", trace, converged, t, comp, info)


def kkt_residuals(state: Union[EpmState, AdmState], problem: SparsityProblem,
                  config: Optional[SolverConfig] = None) -> KKTResiduals:
    """First-order residuals of an EPM or ADM state.

    Stationarity is measured through the proximal optimality map: ``x`` is
    stationary for the x-block iff one more proximal x-step leaves it in
    place, so the residual is ``mu * ||x+ - x||`` (plus the analogous v-step
    residual for ADM).
    """
    cfg = config or SolverConfig()
    amap, k = problem.constraint_map, problem.k
    z = amap.apply(state.x)
    if isinstance(state, EpmState):
        sub = WeightedL1Subproblem(problem.objective, amap, w=state.rho, q=0.0,
                                   g=-state.rho * state.u, mu=cfg.mu, x0=state.x,
                                   tol=1e-10, max_iter=20000)
        x_plus = solve_weighted_l1(sub)
        stat = cfg.mu * float(np.linalg.norm(x_plus - state.x))
        feas = float(np.sum(np.abs(z)) - z @ state.u)
        u = state.u
        dual = max(0.0, float(np.sum(np.abs(u))) - k, float(np.max(np.abs(u), initial=0.0)) - 1.0)
        return KKTResiduals(stat, feas, dual)
    v, pi, alpha = state.v, state.pi, state.alpha
    sub = WeightedL1Subproblem(problem.objective, amap, w=pi * v, q=alpha * v * v, g=0.0,
                               mu=cfg.mu, x0=state.x, tol=1e-10, max_iter=20000)
    x_plus = solve_weighted_l1(sub)
    az = np.abs(z)
    dual = max(0.0, float(np.sum(1.0 - v)) - k, float(np.max(v - 1.0, initial=0.0)),
               float(np.max(-v, initial=0.0)))
    stat = cfg.mu * float(np.linalg.norm(x_plus - state.x))
    if dual <= 1e-9:
        v_plus = v_subproblem_solve(az, pi, v, alpha, cfg.mu, k)
        stat = max(stat, cfg.mu * float(np.linalg.norm(v_plus - v)))
    return KKTResiduals(stat, float(np.max(az * v, initial=0.0)), dual)
