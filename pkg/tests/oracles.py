"""Brute-force reference solvers used by the tests."""

import itertools

import numpy as np


def diag_qp_enumerate(d, a, s, cmp):
    """Minimise ``1/2 x'diag(d)x + a'x`` over ``[0,1]^n`` with ``sum(x) cmp s``
    by enumerating all ``3^n`` bound patterns, with the sum constraint either
    inactive or active."""
    d = np.asarray(d, float)
    a = np.asarray(a, float)
    n = d.size
    states = np.array(list(itertools.product((0, 1, 2), repeat=n)))  # 0: lower, 1: upper, 2: free
    free = states == 2
    fixed = np.where(states == 1, 1.0, 0.0)
    cands = []
    # sum constraint inactive: theta = 0
    x0 = np.where(free, -a / d, fixed)
    cands.append(x0)
    # sum constraint active: solve for theta on the free set
    inv = np.where(free, 1.0 / d, 0.0)
    denom = inv.sum(axis=1)
    base = fixed.sum(axis=1) + np.where(free, -a / d, 0.0).sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        theta = np.where(denom > 0, (base - s) / denom, np.nan)
    x1 = np.where(free, (-a - theta[:, None]) / d, fixed)
    ok1 = np.isfinite(theta) | (np.abs(fixed.sum(axis=1) - s) < 1e-12)
    x1 = np.where(np.isfinite(theta)[:, None], x1, fixed)
    cands.append(x1[ok1])
    X = np.vstack(cands)
    tot = X.sum(axis=1)
    feas = np.all((X >= -1e-12) & (X <= 1 + 1e-12), axis=1)
    if cmp == "eq":
        feas &= np.abs(tot - s) <= 1e-9
    elif cmp == "le":
        feas &= tot <= s + 1e-9
    else:
        feas &= tot >= s - 1e-9
    X = X[feas]
    vals = 0.5 * np.sum(d * X * X, axis=1) + X @ a
    return X[np.argmin(vals)], float(vals.min())


def support_enumeration(B, y, k):
    """Global minimum of ``1/2 ||Bx - y||^2`` over ``||x||_0 <= k``."""
    n = B.shape[1]
    best = 0.5 * float(y @ y)
    best_x = np.zeros(n)
    for S in itertools.combinations(range(n), k):
        S = list(S)
        xs, *_ = np.linalg.lstsq(B[:, S], y, rcond=None)
        val = 0.5 * float(np.sum((B[:, S] @ xs - y) ** 2))
        if val < best:
            best, best_x = val, np.zeros(n)
            best_x[S] = xs
    return best_x, best


def mrf_brute_force(laplacian, unary):
    """Exhaustive minimum of ``1/2 x'Lx + <x, b>`` over ``{0,1}^n``."""
    n = len(unary)
    X = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    vals = 0.5 * np.einsum("ij,jk,ik->i", X, laplacian, X) + X @ unary
    i = int(np.argmin(vals))
    return X[i], float(vals[i])


def weighted_l1_enumerate(H, h, D, c, w, q, g):
    """Minimise ``1/2 x'Hx + h'x + sum w|z| + q/2 z^2 + g z`` with ``z = Dx + c``
    by enumerating sign patterns of ``z`` (``H`` positive definite)."""
    n = H.shape[0]
    m = D.shape[0]

    def F(x):
        z = D @ x + c
        return 0.5 * x @ H @ x + h @ x + np.sum(w * np.abs(z) + 0.5 * q * z * z + g * z)

    best, best_x = np.inf, None
    for sig in itertools.product((-1, 0, 1), repeat=m):
        sig = np.array(sig, float)
        zero = sig == 0
        M = H + D.T @ np.diag(q * ~zero) @ D
        r = h + D.T @ (~zero * (w * sig + g + q * c))
        E = D[zero]
        k = E.shape[0]
        K = np.block([[M, E.T], [E, np.zeros((k, k))]])
        rhs = np.concatenate([-r, -c[zero]])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            continue
        x = sol[:n]
        z = D @ x + c
        if np.any(sig * z < -1e-10):
            continue
        val = F(x)
        if val < best:
            best, best_x = val, x
    return best_x, best
