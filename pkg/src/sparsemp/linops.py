"""Affine operators ``x -> A x + b`` used as sparsity constraint maps.

Every structured kind is backed by an explicit dense or sparse matrix built
once on first use, so ``apply``/``adjoint`` are plain matrix products.
"""

from __future__ import annotations

import dataclasses
from functools import cached_property
from pathlib import Path
from typing import Literal, Optional, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "AffineMap",
    "RankDeficientError",
    "SpectralEstimate",
    "apply",
    "adjoint",
    "estimate_sigma_min",
    "operator_norm",
    "load_dense_csv",
]

Kind = Literal["dense", "identity", "stacked", "second_difference", "grad2d"]

_SVD_MAX_DIM = 512


class RankDeficientError(ValueError):
    """Raised when ``A A^T`` is numerically singular."""


@dataclasses.dataclass(frozen=True, eq=False)
class AffineMap:
    """Immutable affine map ``x -> A x + offset``.

    Use the classmethod constructors rather than calling this directly.
    """

    kind: Kind
    rows: int
    cols: int
    offset: np.ndarray
    matrix: Optional[np.ndarray] = None
    members: tuple = ()
    shape2d: tuple = ()

    def __post_init__(self):
        if self.rows <= 0 or self.cols <= 0:
            raise ValueError("AffineMap dimensions must be positive")
        off = np.asarray(self.offset, dtype=float).reshape(-1)
        if off.shape != (self.rows,):
            raise ValueError(f"offset has length {off.size}, expected {self.rows}")
        off.setflags(write=False)
        object.__setattr__(self, "offset", off)

    # -- constructors -----------------------------------------------------

    @classmethod
    def dense(cls, matrix, offset=None) -> "AffineMap":
        mat = np.array(matrix, dtype=float, ndmin=2)
        mat.setflags(write=False)
        m, n = mat.shape
        return cls("dense", m, n, _offset(offset, m), matrix=mat)

    @classmethod
    def identity(cls, n: int, offset=None) -> "AffineMap":
        return cls("identity", n, n, _offset(offset, n))

    @classmethod
    def stacked(cls, maps: Sequence["AffineMap"], offset=None) -> "AffineMap":
        maps = tuple(maps)
        if not maps:
            raise ValueError("stacked map needs at least one member")
        cols = maps[0].cols
        if any(mp.cols != cols for mp in maps):
            raise ValueError("stacked members must share the column dimension")
        rows = sum(mp.rows for mp in maps)
        if offset is None:
            offset = np.concatenate([mp.offset for mp in maps])
        return cls("stacked", rows, cols, _offset(offset, rows), members=maps)

    @classmethod
    def second_difference(cls, n: int, offset=None) -> "AffineMap":
        if n < 3:
            raise ValueError("second difference needs n >= 3")
        return cls("second_difference", n - 2, n, _offset(offset, n - 2))

    @classmethod
    def grad2d(cls, height: int, width: int, offset=None) -> "AffineMap":
        npix = height * width
        return cls("grad2d", 2 * npix, npix, _offset(offset, 2 * npix),
                   shape2d=(height, width))

    def with_offset(self, offset) -> "AffineMap":
        return dataclasses.replace(self, offset=_offset(offset, self.rows))

    # -- matrix realisation -----------------------------------------------

    @cached_property
    def linear(self):
        """The linear part as a dense ndarray or a CSR matrix."""
        if self.kind == "dense":
            return self.matrix
        if self.kind == "identity":
            return sp.identity(self.cols, format="csr")
        if self.kind == "second_difference":
            n = self.cols
            return sp.diags([1.0, -2.0, 1.0], [0, 1, 2], shape=(n - 2, n),
                            format="csr")
        if self.kind == "grad2d":
            return _grad2d_matrix(*self.shape2d)
        parts = [mp.linear for mp in self.members]
        if any(isinstance(p, np.ndarray) for p in parts):
            return np.vstack([p.toarray() if sp.issparse(p) else p for p in parts])
        return sp.vstack(parts, format="csr")

    @property
    def is_identity(self) -> bool:
        return self.kind == "identity"

    def toarray(self) -> np.ndarray:
        lin = self.linear
        return lin.toarray() if sp.issparse(lin) else np.array(lin)

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.cols,):
            raise ValueError(f"expected vector of length {self.cols}, got {x.shape}")
        if self.kind == "identity":
            return x + self.offset
        return self.linear @ x + self.offset

    def apply_linear(self, x) -> np.ndarray:
        """``A x`` without the offset."""
        return self.apply(x) - self.offset

    def adjoint(self, c) -> np.ndarray:
        c = np.asarray(c, dtype=float)
        if c.shape != (self.rows,):
            raise ValueError(f"expected vector of length {self.rows}, got {c.shape}")
        if self.kind == "identity":
            return c.copy()
        return self.linear.T @ c

    def row_subset(self, idx) -> "AffineMap":
        """Dense map formed by the selected rows (offset included)."""
        idx = np.asarray(idx, dtype=int)
        lin = self.linear
        sub = lin[idx] if not sp.issparse(lin) else lin[idx].toarray()
        return AffineMap.dense(np.atleast_2d(sub), self.offset[idx])


def _offset(offset, m: int) -> np.ndarray:
    if offset is None:
        return np.zeros(m)
    off = np.asarray(offset, dtype=float).reshape(-1)
    if off.size == 1 and m != 1:
        off = np.full(m, float(off[0]))
    return off


def _grad2d_matrix(h: int, w: int):
    # forward differences, zero at the far boundary (Neumann / replicate)
    def diff1d(n):
        if n == 1:
            return sp.csr_matrix((1, 1))
        d = sp.diags([-1.0, 1.0], [0, 1], shape=(n, n), format="lil")
        d[n - 1, n - 1] = 0.0
        return d.tocsr()

    gx = sp.kron(sp.identity(h), diff1d(w))
    gy = sp.kron(diff1d(h), sp.identity(w))
    return sp.vstack([gx, gy], format="csr")


def apply(amap: AffineMap, x) -> np.ndarray:
    """Return ``A x + offset``."""
    return amap.apply(x)


def adjoint(amap: AffineMap, c) -> np.ndarray:
    """Return ``A^T c``; the offset plays no role."""
    return amap.adjoint(c)


@dataclasses.dataclass(frozen=True)
class SpectralEstimate:
    sigma_min: float
    method: Literal["exact_svd", "inverse_power_iteration", "user_supplied", "closed_form"]

    def __post_init__(self):
        if not self.sigma_min >= 0:
            raise ValueError("sigma_min must be nonnegative")


def estimate_sigma_min(amap: AffineMap, tol: float = 1e-6,
                       override: Optional[float] = None) -> SpectralEstimate:
    """Smallest singular value of a full-row-rank ``A``.

    Raises
    ------
    RankDeficientError
        If ``A A^T`` is singular (``rows > cols`` or rank-deficient rows).
        Pass ``override`` to bypass the computation.
    """
    if override is not None:
        return SpectralEstimate(float(override), "user_supplied")
    if amap.kind == "identity":
        return SpectralEstimate(1.0, "closed_form")
    if amap.rows > amap.cols:
        raise RankDeficientError(
            f"A is {amap.rows}x{amap.cols}; A A^T is singular. "
            "Supply sigma_override (or rho_max) explicitly.")
    if min(amap.rows, amap.cols) <= _SVD_MAX_DIM:
        s = scipy.linalg.svdvals(amap.toarray())
        if s[-1] <= 1e-12 * max(s[0], 1.0):
            raise RankDeficientError(
                "A A^T is numerically singular; supply sigma_override explicitly.")
        return SpectralEstimate(float(s[-1]), "exact_svd")
    return SpectralEstimate(_inverse_power_sigma(amap, tol), "inverse_power_iteration")


def _inverse_power_sigma(amap: AffineMap, tol: float, max_iter: int = 500) -> float:
    lin = amap.linear
    gram = lin @ lin.T
    try:
        if sp.issparse(gram):
            solve = spla.splu(sp.csc_matrix(gram)).solve
        else:
            cho = scipy.linalg.cho_factor(gram)
            solve = lambda r: scipy.linalg.cho_solve(cho, r)  # noqa: E731
    except (RuntimeError, np.linalg.LinAlgError) as exc:
        raise RankDeficientError(
            "A A^T is numerically singular; supply sigma_override explicitly.") from exc
    rng = np.random.default_rng(0)
    v = rng.standard_normal(amap.rows)
    v /= np.linalg.norm(v)
    lam_prev = 0.0
    lam = 0.0
    for _ in range(max_iter):
        w = solve(v)
        if not np.all(np.isfinite(w)):
            raise RankDeficientError("A A^T is numerically singular")
        lam = float(v @ w)
        v = w / np.linalg.norm(w)
        if abs(lam - lam_prev) <= tol * abs(lam):
            break
        lam_prev = lam
    if lam <= 0:
        raise RankDeficientError("A A^T is numerically singular")
    return float(np.sqrt(1.0 / lam))


def operator_norm(amap: AffineMap, iters: int = 100) -> float:
    """Spectral norm ``||A||_2`` (exact for small maps, power iteration otherwise)."""
    if amap.kind == "identity":
        return 1.0
    if amap.kind == "stacked" and all(mp.kind == "identity" for mp in amap.members):
        return float(np.sqrt(len(amap.members)))
    if min(amap.rows, amap.cols) <= _SVD_MAX_DIM:
        return float(scipy.linalg.svdvals(amap.toarray())[0])
    rng = np.random.default_rng(0)
    x = rng.standard_normal(amap.cols)
    nrm = 0.0
    for _ in range(iters):
        y = amap.adjoint(amap.apply_linear(x))
        nrm_new = np.linalg.norm(y)
        x = y / nrm_new
        if abs(nrm_new - nrm) <= 1e-10 * nrm_new:
            break
        nrm = nrm_new
    # power iteration converges from below; pad slightly
    return float(np.sqrt(nrm_new) * (1 + 1e-6))


def load_dense_csv(path, offset=None) -> AffineMap:
    """Read a row-major, comma-separated, header-less matrix file."""
    mat = np.loadtxt(Path(path), delimiter=",", ndmin=2)
    return AffineMap.dense(mat, offset)
