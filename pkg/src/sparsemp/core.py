"""Problem, configuration and result types shared by every solver."""

from __future__ import annotations

import csv
import dataclasses
import io
import math
from typing import Dict, List, Optional

import numpy as np

from .convex_inner import (
    ObjectiveSpec,
    WeightedL1Quad,
    Workspace,
    ZeroPattern,
    composite_minimize,
)
from .linops import AffineMap

__all__ = [
    "SparsityProblem",
    "SolverConfig",
    "TraceRecord",
    "SolveResult",
    "count_nonzero",
    "nonzero_threshold",
    "snap_to_support",
    "polish_on_support",
    "solve_unconstrained",
    "top_k_support",
    "trace_to_csv",
    "TRACE_COLUMNS",
]


@dataclasses.dataclass
class SparsityProblem:
    """``min f(x)  s.t.  ||A x + b||_0 <= k``."""

    objective: ObjectiveSpec
    constraint_map: AffineMap
    k: float
    sigma_override: Optional[float] = None
    name: str = "problem"
    metadata: Dict = dataclasses.field(default_factory=dict)

    def __post_init__(self):
        if self.objective.n != self.constraint_map.cols:
            raise ValueError("objective and constraint map disagree on n")
        if not 0 <= self.k <= self.constraint_map.rows:
            raise ValueError(f"k={self.k} outside [0, {self.constraint_map.rows}]")

    @property
    def n(self) -> int:
        return self.constraint_map.cols

    @property
    def m(self) -> int:
        return self.constraint_map.rows

    def l0(self, x) -> int:
        return count_nonzero(self.constraint_map.apply(x))


@dataclasses.dataclass
class SolverConfig:
    """Tunables for the MPEC solvers.

    ``rho0 = mu = alpha = eta = 0.01`` and a penalty doubling every
    ``T = 30`` iterations are the standard experimental settings.
    """

    rho0: float = 0.01
    mu: float = 0.01
    alpha: float = 0.01
    eta: float = 0.01
    T: int = 30
    eps_gap: float = 1e-6
    eps_x: float = 1e-6
    max_outer: int = 3000
    inner_tol: float = 1e-6
    inner_max_iter: int = 2000
    sigma_override: Optional[float] = None
    rho_max: float = 1e4
    cap_margin: float = 1e-6
    snap_tol: float = 1e-5
    complete_unconverged: bool = True
    seed: int = 0

    def __post_init__(self):
        for name in ("rho0", "mu", "alpha", "eta"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.T < 1:
            raise ValueError("T must be at least 1")


TRACE_COLUMNS = ("iteration", "objective", "gap", "penalty", "wall_ms")


@dataclasses.dataclass
class TraceRecord:
    iteration: int
    objective: float
    gap: float
    penalty: float
    wall_ms: float
    extras: Dict[str, float] = dataclasses.field(default_factory=dict)


@dataclasses.dataclass
class SolveResult:
    x_final: np.ndarray
    objective_value: float
    l0_achieved: int
    complementarity_gap: float
    outer_iterations: int
    converged: bool
    method: str
    trace: List[TraceRecord] = dataclasses.field(default_factory=list)
    info: Dict = dataclasses.field(default_factory=dict)


def nonzero_threshold(z) -> float:
    z = np.asarray(z, dtype=float)
    return 1e-8 * (1.0 + (float(np.max(np.abs(z))) if z.size else 0.0))


def count_nonzero(z) -> int:
    """Entries with ``|z_i| > 1e-8 (1 + ||z||_inf)``."""
    z = np.asarray(z, dtype=float)
    return int(np.count_nonzero(np.abs(z) > nonzero_threshold(z)))


def top_k_support(z, k: float) -> np.ndarray:
    """Boolean mask of the ``floor(k)`` largest magnitudes (lower index wins ties)."""
    z = np.asarray(z, dtype=float)
    kk = int(math.floor(k + 1e-9))
    mask = np.zeros(z.size, dtype=bool)
    if kk > 0:
        mask[np.argsort(-np.abs(z), kind="stable")[:kk]] = True
    return mask


def _project_affine_zero(amap: AffineMap, x, zero_mask) -> np.ndarray:
    """Least-change ``x'`` with ``(A x' + b)[zero_mask] = 0``."""
    idx = np.flatnonzero(zero_mask)
    if idx.size == 0:
        return np.array(x, dtype=float)
    if amap.is_identity:
        out = np.array(x, dtype=float)
        out[idx] = -amap.offset[idx]
        return out
    sub = amap.row_subset(idx)
    resid = sub.apply(x)
    delta, *_ = np.linalg.lstsq(sub.matrix, resid, rcond=None)
    return np.asarray(x, dtype=float) - delta


def snap_to_support(problem: SparsityProblem, x, snap_tol: float = 1e-5):
    """Zero out numerically-vanished entries of ``A x + b`` exactly.

    Only acts when every entry outside the top-``k`` is already below
    ``snap_tol * (1 + ||z||_inf)``; returns ``(x, snapped)``.
    """
    z = problem.constraint_map.apply(x)
    if count_nonzero(z) <= problem.k:
        return np.asarray(x, dtype=float), False
    keep = top_k_support(z, problem.k)
    off = np.abs(z[~keep])
    if off.size and off.max() > snap_tol * (1.0 + np.abs(z).max()):
        return np.asarray(x, dtype=float), False
    return _project_affine_zero(problem.constraint_map, x, ~keep), True


def solve_unconstrained(problem: SparsityProblem, x, tol: float = 1e-10,
                        max_iter: int = 5000) -> np.ndarray:
    """Minimise ``f`` alone; the answer whenever ``k >= m``."""
    block = (WeightedL1Quad(np.zeros(problem.n)), AffineMap.identity(problem.n))
    res = composite_minimize(problem.objective, [block], 1e-10, np.asarray(x, dtype=float),
                             tol=tol, max_iter=max_iter)
    return res.x


def polish_on_support(problem: SparsityProblem, x, keep_mask, tol: float = 1e-10,
                      max_iter: int = 5000, workspace: Optional[Workspace] = None):
    """Minimise ``f`` with ``(A x + b)_i = 0`` for every ``i`` not in ``keep_mask``."""
    zero_mask = ~np.asarray(keep_mask, dtype=bool)
    if not zero_mask.any():
        return solve_unconstrained(problem, x, tol=tol, max_iter=max_iter)
    block = (ZeroPattern(zero_mask), problem.constraint_map)
    x_start = _project_affine_zero(problem.constraint_map, x, zero_mask)
    res = composite_minimize(problem.objective, [block], 1e-10, x_start, tol=tol,
                             max_iter=max_iter, workspace=workspace, monotone=False)
    return _project_affine_zero(problem.constraint_map, res.x, zero_mask)


def trace_to_csv(trace: List[TraceRecord], header: Optional[Dict] = None) -> str:
    """Serialize a trace; ``header`` items become leading ``# key=value`` lines."""
    buf = io.StringIO()
    for key, val in (header or {}).items():
        buf.write(f"# {key}={val}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(TRACE_COLUMNS)
    for rec in trace:
        writer.writerow([rec.iteration, repr(float(rec.objective)), repr(float(rec.gap)),
                         repr(float(rec.penalty)), f"{rec.wall_ms:.3f}"])
    return buf.getvalue()
