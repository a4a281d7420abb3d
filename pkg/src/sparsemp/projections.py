"""Exact solvers for box/cardinality-coupled projection subproblems."""

from __future__ import annotations

import dataclasses
from typing import Literal

import numpy as np

__all__ = [
    "DiagonalQP",
    "InfeasibleQPError",
    "breakpoint_solve",
    "capped_simplex_project",
    "hard_threshold",
    "v_subproblem_solve",
]

Comparison = Literal["eq", "le", "ge"]


class InfeasibleQPError(ValueError):
    pass


@dataclasses.dataclass
class DiagonalQP:
    """``min 1/2 x'diag(d)x + a'x  s.t. 0 <= x <= 1, sum(x) <cmp> s``."""

    d: np.ndarray
    a: np.ndarray
    s: float
    cmp: Comparison = "le"

    def __post_init__(self):
        self.d = np.asarray(self.d, dtype=float).reshape(-1)
        self.a = np.asarray(self.a, dtype=float).reshape(-1)
        if self.d.shape != self.a.shape:
            raise ValueError("d and a must have the same length")
        if np.any(self.d <= 0):
            raise ValueError("all curvatures d_i must be positive")
        if self.cmp not in ("eq", "le", "ge"):
            raise ValueError(f"unknown comparison {self.cmp!r}")
        n = self.d.size
        if self.cmp == "eq" and not (0 <= self.s <= n):
            raise InfeasibleQPError(f"sum(x) = {self.s} is infeasible on [0,1]^{n}")
        if self.cmp == "le" and self.s < 0:
            raise InfeasibleQPError(f"sum(x) <= {self.s} is infeasible")
        if self.cmp == "ge" and self.s > n:
            raise InfeasibleQPError(f"sum(x) >= {self.s} is infeasible on [0,1]^{n}")

    def objective(self, x) -> float:
        return float(0.5 * np.dot(self.d * x, x) + np.dot(self.a, x))


def _clipped(qp: DiagonalQP, theta: float) -> np.ndarray:
    return np.clip((-qp.a - theta) / qp.d, 0.0, 1.0)


def _find_theta(qp: DiagonalQP, s: float) -> float:
    """Scalar ``theta`` with ``sum(clip((-a - theta)/d, 0, 1)) == s``.

    ``S(theta)`` is continuous, piecewise affine and nonincreasing; its kinks
    sit at ``-a_i - d_i`` (coordinate leaves 1) and ``-a_i`` (reaches 0).
    """
    d, a = qp.d, qp.a
    n = d.size
    lo = -a - d
    hi = -a
    events = np.concatenate([lo, hi])
    dcount = np.concatenate([-np.ones(n), np.zeros(n)])
    dconst = np.concatenate([-a / d, a / d])
    dslope = np.concatenate([1.0 / d, -1.0 / d])
    order = np.argsort(events, kind="stable")
    events = events[order]
    count = n + np.cumsum(dcount[order])
    const = np.cumsum(dconst[order])
    slope = np.cumsum(dslope[order])
    # S just right of event j: count_j + const_j - theta * slope_j
    s_at = count + const - events * slope
    if s >= n:
        return float(events[0])
    if s <= 0:
        return float(events[-1])
    # first event index where S drops to (or below) s
    j = int(np.searchsorted(-s_at, -s, side="left"))
    if j == 0:
        return float(events[0])
    if j >= events.size:
        # rounding kept S above a tiny positive s; every coordinate is at 0
        return float(events[-1])
    # theta lies in [events[j-1], events[j]] where S is affine with slope_{j-1}
    sl = slope[j - 1]
    if sl <= 0:
        return float(events[j - 1])
    theta = (count[j - 1] + const[j - 1] - s) / sl
    return float(np.clip(theta, events[j - 1], events[j]))


def breakpoint_solve(qp: DiagonalQP) -> np.ndarray:
    """Exact minimiser of a :class:`DiagonalQP` in ``O(n log n)``.

    The solution has the water-filling form
    ``x_i = clip((-a_i - theta) / d_i, 0, 1)`` for one scalar ``theta``;
    ``theta = 0`` whenever an inequality budget is inactive.
    """
    if qp.d.size == 0:
        return np.zeros(0)
    x0 = _clipped(qp, 0.0)
    total = x0.sum()
    if qp.cmp == "le" and total <= qp.s:
        return x0
    if qp.cmp == "ge" and total >= qp.s:
        return x0
    return _clipped(qp, _find_theta(qp, qp.s))


def capped_simplex_project(z, k: float) -> np.ndarray:
    """Project ``z`` onto ``{u : -1 <= u <= 1, ||u||_1 <= k}``.

    Solved on ``|z|`` with the unit-curvature breakpoint search and the signs
    restored afterwards. ``k`` is a real budget; it is not rounded.
    """
    z = np.asarray(z, dtype=float)
    if k < 0:
        raise ValueError("budget k must be nonnegative")
    ubar = breakpoint_solve(DiagonalQP(np.ones_like(z), -np.abs(z), float(k), "le"))
    return np.sign(z) * ubar


def hard_threshold(x, k: int) -> np.ndarray:
    """Keep the ``k`` largest-magnitude entries (ties: lower index wins)."""
    x = np.asarray(x, dtype=float)
    k = int(k)
    if k < 0 or k > x.size:
        raise ValueError(f"k={k} outside [0, {x.size}]")
    out = np.zeros_like(x)
    if k == 0:
        return out
    keep = np.argsort(-np.abs(x), kind="stable")[:k]
    out[keep] = x[keep]
    return out


def v_subproblem_solve(abs_ax, pi, v_prev, alpha: float, mu: float, k: float) -> np.ndarray:
    """Minimise the proximal ``v``-step of the separable MPEC over
    ``{0 <= v <= 1, sum(1 - v) <= k}``.

    Curvature ``alpha*|Ax|^2 + mu``, linear term ``pi*|Ax| - mu*v_prev``.
    """
    abs_ax = np.asarray(abs_ax, dtype=float)
    m = abs_ax.size
    if k < 0 or k > m:
        raise ValueError(f"k={k} outside [0, {m}]")
    if alpha <= 0 or mu <= 0:
        raise ValueError("alpha and mu must be positive")
    d = alpha * abs_ax * abs_ax + mu
    b = np.asarray(pi, dtype=float) * abs_ax - mu * np.asarray(v_prev, dtype=float)
    return breakpoint_solve(DiagonalQP(d, b, float(m - k), "ge"))
