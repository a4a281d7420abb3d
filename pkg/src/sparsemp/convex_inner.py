"""Convex subproblem machinery shared by the MPEC solvers and the baselines.

The central routine minimises

    f(x) + sum_i [w_i |z_i| + q_i/2 z_i^2 + g_i z_i] + mu/2 ||x - x0||^2,
    z = A x + b,

where ``f`` is a sum of smooth terms and prox-capable terms composed with
affine maps. A single identity-mapped nonsmooth block is handled by proximal
gradient; everything else by ADMM over one splitting variable per block, with
an exact x-step when the smooth part is quadratic and a linearised one
otherwise.
"""

from __future__ import annotations

import dataclasses
import math
from typing import List, Optional, Sequence, Tuple

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.special import expit

from .linops import AffineMap, operator_norm
from .projections import capped_simplex_project

__all__ = [
    "SmoothTerm",
    "QuadraticTerm",
    "LogisticLoss",
    "ProxTerm",
    "WeightedL1Quad",
    "ZeroPattern",
    "BoxIndicator",
    "HingeSum",
    "LinfNorm",
    "TVNorm",
    "ObjectiveSpec",
    "WeightedL1Subproblem",
    "InnerResult",
    "InnerDivergenceError",
    "Workspace",
    "soft_threshold",
    "logistic_gradient",
    "prox_hinge",
    "prox_linf_compose",
    "prox_tv_groups",
    "solve_weighted_l1",
    "composite_minimize",
]


class InnerDivergenceError(RuntimeError):
    """The inner solver's objective blew up; usually a bad step or config."""


def soft_threshold(v, thresh):
    return np.sign(v) * np.maximum(np.abs(v) - thresh, 0.0)


# ---------------------------------------------------------------------------
# prox / gradient oracles


def logistic_gradient(x, features, labels, lam: float = 0.0):
    """Gradient of ``lam/2 ||x||^2 + sum_i log(1 + exp(r_i)) - r_i t_i``,
    ``r = S x``."""
    x = np.asarray(x, dtype=float)
    g = lam * x
    if features is None or features.shape[0] == 0:
        return g
    r = features @ x
    return g + features.T @ (expit(r) - labels)


def prox_hinge(v, step: float):
    """Prox of ``step * max(0, 1 - m)`` applied per margin."""
    v = np.asarray(v, dtype=float)
    return np.where(v >= 1.0, v, np.where(v <= 1.0 - step, v + step, 1.0))


def _project_l1_ball(v, radius: float = 1.0):
    # the capped set coincides with the l1 ball when radius <= 1
    if radius <= 1.0:
        return capped_simplex_project(v, radius)
    return radius * capped_simplex_project(v / radius, 1.0)


def prox_linf_compose(r, step: float):
    """Prox of ``step * ||.||_inf`` by Moreau decomposition."""
    r = np.asarray(r, dtype=float)
    if step <= 0:
        raise ValueError("step must be positive")
    return r - step * _project_l1_ball(r / step)


def prox_tv_groups(gx, gy, step: float, p: int = 2):
    """Prox of ``step * sum_i ||(gx_i, gy_i)||_p`` for ``p`` in {1, 2}."""
    gx = np.asarray(gx, dtype=float)
    gy = np.asarray(gy, dtype=float)
    if gx.shape != gy.shape:
        raise ValueError("gx and gy must have equal length")
    if p == 1:
        return soft_threshold(gx, step), soft_threshold(gy, step)
    if p != 2:
        raise ValueError("p must be 1 or 2")
    nrm = np.hypot(gx, gy)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > step, 1.0 - step / nrm, 0.0)
    return scale * gx, scale * gy


# ---------------------------------------------------------------------------
# objective terms


class SmoothTerm:
    """Differentiable convex term with a gradient-Lipschitz constant."""

    lipschitz_grad: float = 0.0
    hessian = None  # set by quadratic terms

    def value(self, x) -> float:
        raise NotImplementedError

    def grad(self, x) -> np.ndarray:
        raise NotImplementedError


class QuadraticTerm(SmoothTerm):
    """``1/2 x'Hx + h'x + c`` with ``H`` symmetric PSD (dense or sparse)."""

    def __init__(self, H, h=None, const: float = 0.0):
        self.hessian = H if sp.issparse(H) else np.asarray(H, dtype=float)
        n = self.hessian.shape[0]
        self.h = np.zeros(n) if h is None else np.asarray(h, dtype=float)
        self.const = float(const)
        if sp.issparse(self.hessian):
            dense = self.hessian.toarray() if n <= 2048 else None
        else:
            dense = self.hessian
        if dense is not None:
            self.lipschitz_grad = float(max(np.linalg.eigvalsh(dense)[-1], 0.0))
        else:
            self.lipschitz_grad = float(spla.eigsh(self.hessian, k=1, which="LA",
                                                   return_eigenvectors=False)[0])

    @classmethod
    def least_squares(cls, B, y, weight: float = 1.0):
        """``weight/2 ||B x - y||^2``."""
        B = np.asarray(B, dtype=float)
        y = np.asarray(y, dtype=float)
        return cls(weight * B.T @ B, -weight * B.T @ y, 0.5 * weight * float(y @ y))

    @classmethod
    def squared_distance(cls, c, weight: float = 1.0):
        """``weight/2 ||x - c||^2``."""
        c = np.asarray(c, dtype=float)
        return cls(weight * sp.identity(c.size, format="csr"), -weight * c,
                   0.5 * weight * float(c @ c))

    def value(self, x):
        x = np.asarray(x, dtype=float)
        return float(0.5 * x @ (self.hessian @ x) + self.h @ x + self.const)

    def grad(self, x):
        return self.hessian @ np.asarray(x, dtype=float) + self.h


class LogisticLoss(SmoothTerm):
    """``lam/2 ||x||^2 + sum_i log(1 + exp(<s_i, x>)) - <s_i, x> t_i``."""

    def __init__(self, features, labels, lam: float):
        self.features = features if sp.issparse(features) else np.atleast_2d(
            np.asarray(features, dtype=float))
        self.labels = np.asarray(labels, dtype=float)
        self.lam = float(lam)
        if self.features.shape[0] == 0:
            snorm2 = 0.0
        elif sp.issparse(self.features) or min(self.features.shape) > 512:
            snorm2 = operator_norm(AffineMap.dense(
                self.features.toarray() if sp.issparse(self.features) else self.features)) ** 2
        else:
            snorm2 = float(np.linalg.norm(self.features, 2) ** 2)
        self.lipschitz_grad = snorm2 / 4.0 + self.lam

    def value(self, x):
        x = np.asarray(x, dtype=float)
        val = 0.5 * self.lam * float(x @ x)
        if self.features.shape[0]:
            r = self.features @ x
            val += float(np.sum(np.logaddexp(0.0, r) - r * self.labels))
        return val

    def grad(self, x):
        return logistic_gradient(x, self.features, self.labels, self.lam)


class ProxTerm:
    """Convex function with a cheap proximal operator."""

    def value(self, r) -> float:
        raise NotImplementedError

    def prox(self, v, step: float) -> np.ndarray:
        raise NotImplementedError


class WeightedL1Quad(ProxTerm):
    """Separable ``sum_i w_i |z_i| + q_i/2 z_i^2 + g_i z_i``."""

    def __init__(self, w, q=0.0, g=0.0):
        self.w = np.asarray(w, dtype=float)
        self.q = np.broadcast_to(np.asarray(q, dtype=float), self.w.shape)
        self.g = np.broadcast_to(np.asarray(g, dtype=float), self.w.shape)
        if np.any(self.w < 0) or np.any(self.q < 0):
            raise ValueError("w and q must be nonnegative")

    def value(self, r):
        r = np.asarray(r, dtype=float)
        return float(np.sum(self.w * np.abs(r) + 0.5 * self.q * r * r + self.g * r))

    def prox(self, v, step):
        den = 1.0 + step * self.q
        return soft_threshold((v - step * self.g) / den, step * self.w / den)


class ZeroPattern(ProxTerm):
    """Indicator of ``{z : z[mask] = 0}``."""

    def __init__(self, mask):
        self.mask = np.asarray(mask, dtype=bool)

    def value(self, r):
        # treated as a hard constraint enforced by the prox; the value ignores it
        return 0.0

    def prox(self, v, step):
        out = np.array(v, dtype=float)
        out[self.mask] = 0.0
        return out


class BoxIndicator(ProxTerm):
    """Indicator of ``{lower <= r <= upper}``; the value ignores it like
    :class:`ZeroPattern` since iterates are kept feasible by the prox."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=float)
        self.upper = np.asarray(upper, dtype=float)
        if np.any(self.lower > self.upper):
            raise ValueError("empty box")

    def value(self, r):
        return 0.0

    def prox(self, v, step):
        return np.clip(v, self.lower, self.upper)


class HingeSum(ProxTerm):
    """``sum_i max(0, 1 - m_i)`` over margins ``m``."""

    def value(self, r):
        return float(np.sum(np.maximum(0.0, 1.0 - np.asarray(r))))

    def prox(self, v, step):
        return prox_hinge(v, step)


class LinfNorm(ProxTerm):
    def value(self, r):
        return float(np.max(np.abs(r))) if np.size(r) else 0.0

    def prox(self, v, step):
        return prox_linf_compose(v, step)


class TVNorm(ProxTerm):
    """Isotropic (p=2) or anisotropic (p=1) TV on stacked ``[gx; gy]``."""

    def __init__(self, p: int = 2):
        if p not in (1, 2):
            raise ValueError("p must be 1 or 2")
        self.p = p

    def value(self, r):
        gx, gy = np.split(np.asarray(r, dtype=float), 2)
        if self.p == 1:
            return float(np.sum(np.abs(gx) + np.abs(gy)))
        return float(np.sum(np.hypot(gx, gy)))

    def prox(self, v, step):
        gx, gy = np.split(np.asarray(v, dtype=float), 2)
        px, py = prox_tv_groups(gx, gy, step, self.p)
        return np.concatenate([px, py])


@dataclasses.dataclass
class ObjectiveSpec:
    """Convex ``f`` = smooth terms + prox terms composed with affine maps.

    ``lipschitz_f`` is the Lipschitz constant of ``f`` itself (on whatever
    region the problem builder deems relevant); the penalty thresholds of
    the MPEC solvers are computed from it.
    """

    n: int
    smooth_terms: List[SmoothTerm] = dataclasses.field(default_factory=list)
    prox_terms: List[Tuple[ProxTerm, AffineMap]] = dataclasses.field(default_factory=list)
    lipschitz_f: float = 1.0
    const: float = 0.0

    def value(self, x) -> float:
        x = np.asarray(x, dtype=float)
        val = self.const + sum(t.value(x) for t in self.smooth_terms)
        for term, amap in self.prox_terms:
            val += term.value(amap.apply(x))
        return float(val)

    __call__ = value

    @property
    def is_smooth(self) -> bool:
        return not self.prox_terms

    def smooth_value(self, x) -> float:
        return float(sum(t.value(x) for t in self.smooth_terms))

    def smooth_grad(self, x) -> np.ndarray:
        g = np.zeros(self.n)
        for t in self.smooth_terms:
            g += t.grad(x)
        return g

    @property
    def smooth_lipschitz(self) -> float:
        return float(sum(t.lipschitz_grad for t in self.smooth_terms))

    def quadratic_parts(self):
        """``(H, h)`` summed over smooth terms, or ``None`` if any is not quadratic."""
        if any(t.hessian is None for t in self.smooth_terms):
            return None
        H = sp.csr_matrix((self.n, self.n))
        h = np.zeros(self.n)
        for t in self.smooth_terms:
            H = H + t.hessian
            h += t.h
        return H, h


# ---------------------------------------------------------------------------
# solver


@dataclasses.dataclass
class WeightedL1Subproblem:
    objective: ObjectiveSpec
    map: AffineMap
    w: np.ndarray
    q: np.ndarray
    g: np.ndarray
    mu: float
    x0: np.ndarray
    tol: float = 1e-6
    max_iter: int = 2000

    def __post_init__(self):
        m = self.map.rows
        self.w = np.broadcast_to(np.asarray(self.w, dtype=float), (m,))
        self.q = np.broadcast_to(np.asarray(self.q, dtype=float), (m,))
        self.g = np.broadcast_to(np.asarray(self.g, dtype=float), (m,))
        self.x0 = np.asarray(self.x0, dtype=float)
        if np.any(self.w < 0) or np.any(self.q < 0):
            raise ValueError("weights w and q must be nonnegative")
        if self.mu < 0:
            raise ValueError("mu must be nonnegative")

    def value(self, x) -> float:
        z = self.map.apply(x)
        d = np.asarray(x) - self.x0
        return (self.objective.value(x)
                + float(np.sum(self.w * np.abs(z) + 0.5 * self.q * z * z + self.g * z))
                + 0.5 * self.mu * float(d @ d))


@dataclasses.dataclass
class InnerResult:
    x: np.ndarray
    objective: float
    iterations: int
    converged: bool
    kkt_residual: float
    method: str
    last_x: Optional[np.ndarray] = None


class Workspace:
    """Per-solve cache of factorizations and ADMM warm starts.

    Not shared between concurrent solves.
    """

    def __init__(self):
        self._factors = {}
        self.duals = None
        self.beta = None
        self.norms = {}

    def factor(self, key, build):
        fac = self._factors.get(key)
        if fac is None:
            if len(self._factors) > 16:
                self._factors.clear()
            fac = self._factors[key] = build()
        return fac

    def norm(self, amap: AffineMap) -> float:
        key = id(amap)
        if key not in self.norms:
            self.norms[key] = (amap, operator_norm(amap))
        return self.norms[key][1]


def solve_weighted_l1(sub: WeightedL1Subproblem, workspace: Optional[Workspace] = None,
                      return_info: bool = False):
    """Minimise the weighted-l1 subproblem; returns ``x`` (or an InnerResult)."""
    block = (WeightedL1Quad(sub.w, sub.q, sub.g), sub.map)
    res = composite_minimize(sub.objective, [block], sub.mu, sub.x0, tol=sub.tol,
                             max_iter=sub.max_iter, workspace=workspace)
    return res if return_info else res.x


def composite_minimize(objective: ObjectiveSpec,
                       extra_blocks: Sequence[Tuple[ProxTerm, AffineMap]],
                       mu: float, x0, tol: float = 1e-6, max_iter: int = 2000,
                       workspace: Optional[Workspace] = None,
                       monotone: bool = True) -> InnerResult:
    """Minimise ``f(x) + sum_j phi_j(K_j x + c_j) + mu/2 ||x - x0||^2``.

    ``extra_blocks`` are appended to the prox terms of ``objective``. With
    ``monotone`` the returned iterate is the best one seen, so it never has a
    larger objective than ``x0``; otherwise, and whenever an indicator block
    is present, the last iterate is returned.
    """
    x0 = np.asarray(x0, dtype=float)
    blocks = list(objective.prox_terms) + list(extra_blocks)
    ws = workspace if workspace is not None else Workspace()

    def full_value(x):
        d = x - x0
        val = objective.const + objective.smooth_value(x) + 0.5 * mu * float(d @ d)
        for term, amap in blocks:
            val += term.value(amap.apply(x))
        return val

    if len(blocks) == 1 and blocks[0][1].is_identity:
        res = _prox_gradient(objective, blocks[0], mu, x0, tol, max_iter, full_value)
    else:
        res = _admm(objective, blocks, mu, x0, tol, max_iter, full_value, ws)
    # indicator values ignore infeasibility, so "best" would favour violators
    if not monotone or any(isinstance(t, (ZeroPattern, BoxIndicator)) for t, _ in blocks):
        res.x, res.objective = res.last_x, full_value(res.last_x)
    return res


def _prox_gradient(objective, block, mu, x0, tol, max_iter, full_value) -> InnerResult:
    term, amap = block
    b = amap.offset
    lip = objective.smooth_lipschitz + mu
    if not objective.smooth_terms:
        if mu <= 0:
            raise ValueError("a pure prox block needs mu > 0")
        x = term.prox(x0 + b, 1.0 / mu) - b
        return InnerResult(x, full_value(x), 1, True, 0.0, "prox", x)
    if lip <= 0:
        raise ValueError("degenerate subproblem: zero curvature")
    step = 1.0 / lip
    x = x0.copy()
    f_start = full_value(x)
    best_x, best_f = x, f_start
    converged = False
    resid = math.inf
    it = 0
    for it in range(1, max_iter + 1):
        grad = objective.smooth_grad(x) + mu * (x - x0)
        x_new = term.prox(x - step * grad + b, step) - b
        dx = x_new - x
        resid = float(np.linalg.norm(dx)) / step
        x = x_new
        fx = full_value(x)
        if not np.isfinite(fx):
            raise InnerDivergenceError("non-finite objective in proximal gradient")
        if fx <= best_f:
            best_x, best_f = x, fx
        if np.linalg.norm(dx) <= 1e-2 * tol * max(1.0, np.linalg.norm(x)):
            converged = True
            break
    return InnerResult(best_x, best_f, it, converged, resid, "prox_gradient", x)


def _stack(blocks, x):
    return [amap.apply(x) for _, amap in blocks]


def _active_set_solve(quad, mu, x0, blocks, z):
    """Exact minimiser when the active pattern of ``z`` is the optimal one.

    Only for quadratic ``f`` with weighted-l1, zero-pattern or box blocks.
    Rows at a kink (``z_i = 0`` with ``w_i > 0``) or at a box bound become
    equalities, the remaining kinks are linear with the observed signs. After
    the KKT solve the multipliers must lie in the subdifferential and the
    free rows must keep their sign / stay inside the box; otherwise ``None``.
    """
    n = x0.size
    M = sp.csr_matrix(quad[0]) + mu * sp.identity(n, format="csr")
    rhs = mu * x0 - quad[1]
    eq_rows, eq_target, lo, hi = [], [], [], []
    checks = []
    for (term, amap), zz in zip(blocks, z):
        lin = sp.csr_matrix(amap.linear)
        b = amap.offset
        m = amap.rows
        if isinstance(term, BoxIndicator):
            at_lo = zz <= term.lower
            at_hi = (zz >= term.upper) & ~at_lo
            active = at_lo | at_hi
            target = np.where(at_lo, term.lower, term.upper) - b
            bound_lo = np.where(at_lo, -np.inf, 0.0)
            bound_hi = np.where(at_lo, 0.0, np.inf)
            checks.append(("box", lin, b, term, ~active))
        else:
            if isinstance(term, ZeroPattern):
                active = term.mask.copy()
                coef = np.zeros(m)
                q = np.zeros(m)
                bound_lo = np.full(m, -np.inf)
                bound_hi = np.full(m, np.inf)
            else:
                active = (zz == 0) & (term.w > 0)
                sgn = np.sign(zz)
                coef = term.w * sgn + term.g
                q = np.array(term.q, dtype=float)
                bound_lo = term.g - term.w
                bound_hi = term.g + term.w
                checks.append(("sign", lin, b, sgn, ~active))
            target = -b
            free = ~active
            if free.any():
                Af = lin[free]
                M = M + Af.T @ sp.diags(q[free]) @ Af
                rhs = rhs - Af.T @ (q[free] * b[free] + coef[free])
        if active.any():
            eq_rows.append(lin[active])
            eq_target.append(target[active])
            lo.append(bound_lo[active])
            hi.append(bound_hi[active])
    if eq_rows:
        AE = sp.vstack(eq_rows, format="csr")
        if AE.shape[0] > n:
            return None
        kkt = sp.bmat([[M, AE.T], [AE, None]], format="csc")
        full_rhs = np.concatenate([rhs] + eq_target)
    else:
        kkt = sp.csc_matrix(M)
        full_rhs = rhs
    try:
        sol = spla.splu(kkt).solve(full_rhs)
    except RuntimeError:
        return None
    if not np.all(np.isfinite(sol)):
        return None
    # a near-singular system can return garbage that looks finite
    if np.linalg.norm(kkt @ sol - full_rhs) > 1e-8 * max(1.0, np.linalg.norm(full_rhs)):
        return None
    x = sol[:n]
    if eq_rows:
        # stationarity reads grad + A_E' xi = 0, so xi is the multiplier itself
        xi = sol[n:]
        lo_all, hi_all = np.concatenate(lo), np.concatenate(hi)
        slack = 1e-9 * (1.0 + np.abs(np.where(np.isfinite(hi_all), hi_all, 0.0))
                        + np.abs(np.where(np.isfinite(lo_all), lo_all, 0.0)))
        if np.any(xi < lo_all - slack) or np.any(xi > hi_all + slack):
            return None
    for kind, lin, b, extra, free in checks:
        zx = lin @ x + b
        tol = 1e-12 * (1.0 + np.abs(zx).max(initial=0.0))
        if kind == "sign":
            kinked = free & (extra != 0)
            if np.any(extra[kinked] * zx[kinked] < -tol):
                return None
        elif np.any(zx[free] < extra.lower[free] - tol) or np.any(zx[free] > extra.upper[free] + tol):
            return None
    return x


def _piecewise_quadratic(quad, blocks) -> bool:
    return quad is not None and all(isinstance(t, (WeightedL1Quad, ZeroPattern, BoxIndicator))
                                    for t, _ in blocks)


def _admm(objective, blocks, mu, x0, tol, max_iter, full_value, ws: Workspace) -> InnerResult:
    n = x0.size
    quad = objective.quadratic_parts()
    exact_ok = _piecewise_quadratic(quad, blocks)
    norms2 = [ws.norm(amap) ** 2 for _, amap in blocks]
    sum_norm2 = float(sum(norms2))
    lip_s = objective.smooth_lipschitz

    kx = _stack(blocks, x0)
    if ws.duals is not None and len(ws.duals) == len(blocks) and all(
            y.shape == v.shape for y, v in zip(ws.duals, kx)):
        y = [d.copy() for d in ws.duals]
        beta = ws.beta
    else:
        y = [np.zeros_like(v) for v in kx]
        beta = 1.0
    # z must start consistent with its own prox to keep the first dual step sane
    z = [term.prox(v + yy, 1.0 / beta) for (term, _), v, yy in zip(blocks, kx, y)]

    def x_solver(beta_):
        key = ("x", id(objective), tuple(id(a) for _, a in blocks), mu, beta_)

        def build():
            ktk = None
            for _, amap in blocks:
                lin = amap.linear
                term = lin.T @ lin
                ktk = term if ktk is None else ktk + term
            mat = quad[0] + mu * sp.identity(n) + beta_ * ktk
            if sp.issparse(mat):
                return spla.factorized(sp.csc_matrix(mat))
            cho = scipy.linalg.cho_factor(np.asarray(mat))
            return lambda r: scipy.linalg.cho_solve(cho, r)

        return ws.factor(key, build)

    x = x0.copy()
    f_start = full_value(x0)
    best_x, best_f = x0.copy(), f_start
    converged = False
    resid = math.inf
    it = 0
    solve = x_solver(beta) if quad is not None else None
    for it in range(1, max_iter + 1):
        if quad is not None:
            rhs = mu * x0 - quad[1]
            for (_, amap), zz, yy in zip(blocks, z, y):
                rhs = rhs + beta * amap.adjoint(zz - yy - amap.offset)
            x = solve(rhs)
        else:
            step = 1.0 / (lip_s + mu + beta * sum_norm2)
            grad = objective.smooth_grad(x) + mu * (x - x0)
            for (_, amap), zz, yy in zip(blocks, z, y):
                grad = grad + beta * amap.adjoint(amap.apply(x) - zz + yy)
            x = x - step * grad
        kx = _stack(blocks, x)
        z_old = z
        z = [term.prox(v + yy, 1.0 / beta) for (term, _), v, yy in zip(blocks, kx, y)]
        y = [yy + v - zz for yy, v, zz in zip(y, kx, z)]

        r_pri = math.sqrt(sum(float(np.sum((v - zz) ** 2)) for v, zz in zip(kx, z)))
        dual_vec = np.zeros(n)
        for (_, amap), zz, zo in zip(blocks, z, z_old):
            dual_vec += amap.adjoint(zz - zo)
        r_dual = beta * float(np.linalg.norm(dual_vec))

        fx = full_value(x)
        if not np.isfinite(fx) or (it > 50 and fx > 1e3 * max(abs(f_start), 1.0)):
            raise InnerDivergenceError(
                f"inner objective diverged ({fx:.3e} from {f_start:.3e})")
        if fx <= best_f:
            best_x, best_f = x.copy(), fx
        if exact_ok and (it <= 2 or it % 10 == 0):
            x_as = _active_set_solve(quad, mu, x0, blocks, z)
            if x_as is not None:
                f_as = full_value(x_as)
                if f_as <= best_f + 1e-12 * max(1.0, abs(best_f)):
                    ws.duals = [yy.copy() for yy in y]
                    ws.beta = beta
                    return InnerResult(x_as, f_as, it, True, 0.0, "admm_active_set", x_as)

        scale_pri = max(math.sqrt(sum(float(v @ v) for v in kx)),
                        math.sqrt(sum(float(zz @ zz) for zz in z)), 1.0)
        ky = np.zeros(n)
        for (_, amap), yy in zip(blocks, y):
            ky += amap.adjoint(yy)
        scale_dual = max(beta * float(np.linalg.norm(ky)), 1.0)
        resid = max(r_pri, r_dual)
        if r_pri <= tol * 1e-2 * scale_pri and r_dual <= tol * 1e-2 * scale_dual:
            converged = True
            break
        # residual balancing, early iterations only
        if it % 10 == 0 and it <= 300:
            if r_pri > 10 * r_dual:
                beta *= 2.0
                y = [yy / 2.0 for yy in y]
            elif r_dual > 10 * r_pri:
                beta /= 2.0
                y = [yy * 2.0 for yy in y]
            else:
                continue
            if quad is not None:
                solve = x_solver(beta)
    ws.duals = [yy.copy() for yy in y]
    ws.beta = beta
    return InnerResult(best_x, best_f, it, converged, resid,
                       "admm" if quad is not None else "linearized_admm", x)
