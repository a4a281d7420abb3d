"""Application adapters, synthetic generators and evaluation metrics.

Every builder returns a :class:`~sparsemp.core.SparsityProblem` whose
objective carries a Lipschitz constant for ``f`` itself, valid on the region
the solvers can reach (a sublevel set or a solution box, documented per
builder).
"""

from __future__ import annotations

import dataclasses
import math
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .convex_inner import (
    BoxIndicator,
    HingeSum,
    LinfNorm,
    LogisticLoss,
    ObjectiveSpec,
    QuadraticTerm,
    TVNorm,
)
from .core import SparsityProblem
from .linops import AffineMap

__all__ = [
    "FeatureSelectionData",
    "SegmentedRegressionInstance",
    "ImageInstance",
    "SPARSITY_FRACTIONS",
    "sparsity_grid",
    "generate_feature_selection",
    "build_feature_selection",
    "generate_segmented_regression",
    "build_segmented_regression",
    "generate_trend_series",
    "build_trend_filtering",
    "generate_mrf",
    "build_mrf",
    "mrf_encode",
    "mrf_decode",
    "mrf_energy",
    "piecewise_constant_image",
    "add_impulse_noise",
    "build_l0tv",
    "snr_metrics",
    "generate_sparse_quadratic",
    "DEFAULT_BOX_RADIUS",
]

DEFAULT_BOX_RADIUS = 100.0
SPARSITY_FRACTIONS = tuple(round(0.01 + 0.05 * i, 2) for i in range(20))


def sparsity_grid(n: int, fractions: Sequence[float] = SPARSITY_FRACTIONS) -> list:
    """Integer budgets ``round(frac * n)`` clipped to ``[1, n - 1]``, duplicates dropped."""
    out = []
    for frac in fractions:
        k = int(min(max(round(frac * n), 1), n - 1))
        if k not in out:
            out.append(k)
    return out


def _check_k(k, m):
    if not 0 <= k <= m:
        raise ValueError(f"k={k} outside [0, {m}]")


# ---------------------------------------------------------------------------
# feature selection


@dataclasses.dataclass
class FeatureSelectionData:
    features: np.ndarray
    labels: np.ndarray
    lam: float = 0.01

    def __post_init__(self):
        if not sp.issparse(self.features):
            self.features = np.atleast_2d(np.asarray(self.features, dtype=float))
            if not np.all(np.isfinite(self.features)):
                raise ValueError("features must be finite")
        self.labels = np.asarray(self.labels, dtype=float).reshape(-1)
        if self.labels.size != self.features.shape[0]:
            raise ValueError("one label per sample required")
        if not np.all(np.isin(self.labels, (-1.0, 1.0))):
            raise ValueError("labels must be -1 or +1")
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")

    @property
    def n(self) -> int:
        return self.features.shape[1]


def generate_feature_selection(samples: int, n: int, seed: int = 0, lam: float = 0.01,
                               support: Optional[int] = None,
                               flip: float = 0.05) -> FeatureSelectionData:
    """Gaussian features, labels from a sparse linear rule with a few flips."""
    rng = np.random.default_rng(seed)
    S = rng.standard_normal((samples, n)) / math.sqrt(n)
    s = support if support is not None else max(1, n // 10)
    w = np.zeros(n)
    w[rng.choice(n, s, replace=False)] = rng.standard_normal(s) * math.sqrt(n)
    y = np.where(S @ w >= 0, 1.0, -1.0)
    y[rng.random(samples) < flip] *= -1
    return FeatureSelectionData(S, y, lam)


def _row_norm_sum(S) -> float:
    if S.shape[0] == 0:
        return 0.0
    if sp.issparse(S):
        return float(np.sum(np.sqrt(np.asarray(S.multiply(S).sum(axis=1)).ravel())))
    return float(np.sum(np.linalg.norm(S, axis=1)))


def build_feature_selection(data: FeatureSelectionData, loss: str, k: float,
                            box_radius: float = DEFAULT_BOX_RADIUS) -> SparsityProblem:
    """``lam/2 ||x||^2 + sum_i loss(<s_i, x>, y_i)  s.t. ||x||_0 <= k``.

    Logistic labels are mapped to ``{0, 1}`` targets. ``lipschitz_f`` is
    ``lam R + sum_i ||s_i||`` on the ball of radius ``R = box_radius``; both
    losses have slopes bounded by one in the margin.
    """
    n = data.n
    _check_k(k, n)
    S = data.features
    smooth = []
    prox = []
    if loss == "logistic":
        smooth.append(LogisticLoss(S, (data.labels + 1.0) / 2.0, data.lam))
    elif loss == "hinge":
        if data.lam > 0:
            smooth.append(QuadraticTerm(data.lam * sp.identity(n, format="csr")))
        margins = sp.diags(data.labels) @ S if sp.issparse(S) else data.labels[:, None] * S
        if S.shape[0]:
            dense = margins.toarray() if sp.issparse(margins) else margins
            prox.append((HingeSum(), AffineMap.dense(dense)))
    else:
        raise ValueError(f"unknown loss {loss!r}")
    lip = data.lam * box_radius + _row_norm_sum(S)
    obj = ObjectiveSpec(n, smooth, prox, lipschitz_f=max(lip, 1e-12))
    return SparsityProblem(obj, AffineMap.identity(n), k, name=f"feature_{loss}",
                           metadata={"loss": loss, "lam": data.lam, "box_radius": box_radius})


# ---------------------------------------------------------------------------
# segmented regression


@dataclasses.dataclass
class SegmentedRegressionInstance:
    design: np.ndarray
    observations: np.ndarray
    true_support: np.ndarray
    sigma_noise: float
    true_x: Optional[np.ndarray] = None

    def __post_init__(self):
        norms = np.linalg.norm(self.design, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-9, rtol=0):
            raise ValueError("design columns must have unit norm")


def generate_segmented_regression(n: int, seed: int = 0, sigma: float = 5.0,
                                  m: Optional[int] = None) -> SegmentedRegressionInstance:
    """Gaussian design with ``m = n / 8`` rows and unit columns, a random
    support of size ``0.5 min(m, n)`` with standard normal values, and
    ``b = A x + N(0, sigma^2)``."""
    if n < 16:
        raise ValueError("n must be at least 16")
    m = n // 8 if m is None else int(m)
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    A /= np.linalg.norm(A, axis=0)
    s = int(0.5 * min(m, n))
    support = np.sort(rng.choice(n, s, replace=False))
    x = np.zeros(n)
    x[support] = rng.standard_normal(s)
    b = A @ x + sigma * rng.standard_normal(m)
    return SegmentedRegressionInstance(A, b, support, float(sigma), x)


def build_segmented_regression(inst: SegmentedRegressionInstance, k: float) -> SparsityProblem:
    """``||A'(Ax - b)||_inf  s.t. ||x||_0 <= k``.

    ``lipschitz_f`` is the largest row norm of ``A'A`` (exact for a max of
    affine absolute values).
    """
    A = inst.design
    n = A.shape[1]
    _check_k(k, n)
    G = A.T @ A
    inner = AffineMap.dense(G, -A.T @ inst.observations)
    lip = float(np.max(np.linalg.norm(G, axis=1)))
    obj = ObjectiveSpec(n, [], [(LinfNorm(), inner)], lipschitz_f=max(lip, 1e-12))
    return SparsityProblem(obj, AffineMap.identity(n), k, name="segmented_regression",
                           metadata={"sigma_noise": inst.sigma_noise})


# ---------------------------------------------------------------------------
# trend filtering


def generate_trend_series(n: int, seed: int = 0, kinks: int = 30,
                          noise: float = 0.02) -> np.ndarray:
    """Piecewise-linear series with ``kinks`` random slope changes plus noise."""
    rng = np.random.default_rng(seed)
    knots = np.sort(rng.choice(np.arange(1, n - 1), size=min(kinks, n - 2), replace=False))
    slopes = rng.standard_normal(knots.size + 1) / n * 4
    seg = np.searchsorted(knots, np.arange(n), side="right")
    trend = np.cumsum(slopes[seg])
    return trend - trend.mean() + noise * rng.standard_normal(n)


def build_trend_filtering(series, k: float) -> SparsityProblem:
    """``1/2 ||x - y||^2  s.t. ||D x||_0 <= k`` with ``D`` the second difference.

    ``x = 0`` is feasible, so every iterate worth keeping lies in
    ``{f <= f(0)}`` where ``||grad f|| <= ||y||``; that is ``lipschitz_f``.
    """
    y = np.asarray(series, dtype=float).reshape(-1)
    n = y.size
    if n < 3:
        raise ValueError("trend filtering needs n >= 3")
    _check_k(k, n - 2)
    obj = ObjectiveSpec(n, [QuadraticTerm.squared_distance(y)],
                        lipschitz_f=max(float(np.linalg.norm(y)), 1e-12))
    return SparsityProblem(obj, AffineMap.second_difference(n), k, name="trend_filtering")


# ---------------------------------------------------------------------------
# binary MRF


def mrf_encode(x01) -> np.ndarray:
    """``{0,1}`` labels to ``{-1,+1}``."""
    return 2.0 * np.asarray(x01, dtype=float) - 1.0


def mrf_decode(s) -> np.ndarray:
    """Sign decoding back to ``{0,1}`` (zero maps to 1)."""
    return (np.asarray(s, dtype=float) >= 0).astype(float)


def mrf_energy(laplacian, unary, x01) -> float:
    x = np.asarray(x01, dtype=float)
    return float(0.5 * x @ (np.asarray(laplacian) @ x) + np.asarray(unary) @ x)


def generate_mrf(n: int, seed: int = 0, density: float = 0.4):
    """Random graph Laplacian with positive weights and a Gaussian unary term."""
    rng = np.random.default_rng(seed)
    W = np.triu(rng.random((n, n)) * (rng.random((n, n)) < density), 1)
    W = W + W.T
    Lap = np.diag(W.sum(axis=1)) - W
    return Lap, rng.standard_normal(n)


def build_mrf(laplacian, unary, formulation: str = "zero_one",
              box_guard: bool = True) -> SparsityProblem:
    """``1/2 x'Lx + b'x`` over ``x in {0,1}^n`` as a sparsity problem.

    With ``x = (s + 1)/2`` the labels ``s in {-1,+1}^n`` are exactly the
    points with ``||s - 1||_0 + ||s + 1||_0 <= n``, i.e. the map
    ``[I; I] s + (-1; +1)`` with ``k = n``. The objective keeps the constant
    so it equals the original energy at decoded labels. ``lipschitz_f`` is
    the gradient bound on the box ``[-1, 1]^n``. With ``box_guard`` the
    (implied) box is added to ``f`` as an indicator; without it a Laplacian
    with a nonzero unary sum makes ``f`` unbounded below along ``1``.
    """
    if formulation != "zero_one":
        raise ValueError("only the zero_one formulation is supported")
    Lap = np.asarray(laplacian, dtype=float)
    b = np.asarray(unary, dtype=float).reshape(-1)
    n = b.size
    if Lap.shape != (n, n):
        raise ValueError("laplacian must be n x n")
    if not np.allclose(Lap, Lap.T, atol=1e-12):
        raise ValueError("laplacian must be symmetric")
    if n and np.linalg.eigvalsh(Lap)[0] < -1e-10 * max(1.0, np.abs(Lap).max()):
        raise ValueError("laplacian is not positive semidefinite")
    ones = np.ones(n)
    H = Lap / 4.0
    h = Lap @ ones / 4.0 + b / 2.0
    const = float(ones @ Lap @ ones / 8.0 + b.sum() / 2.0)
    lip = float(np.linalg.norm(H, 2) * math.sqrt(n) + np.linalg.norm(h))
    eye = AffineMap.identity(n)
    # the box is implied by the constraint; stating it keeps f bounded below
    box = (BoxIndicator(-ones, ones), eye)
    obj = ObjectiveSpec(n, [QuadraticTerm(H, h, const)], [box] if box_guard else [],
                        lipschitz_f=max(lip, 1e-12))
    amap = AffineMap.stacked([eye, eye], offset=np.concatenate([-ones, ones]))
    return SparsityProblem(obj, amap, n, name="mrf",
                           metadata={"laplacian": Lap, "unary": b})


# ---------------------------------------------------------------------------
# impulse noise removal


@dataclasses.dataclass
class ImageInstance:
    clean: np.ndarray
    noisy: np.ndarray
    noise_fraction: float
    noise_kind: str = "random_value"
    corrupted: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.clean.shape != self.noisy.shape or self.clean.ndim != 2:
            raise ValueError("clean and noisy must be equal-shape 2-D arrays")
        if not 0 <= self.noise_fraction <= 1:
            raise ValueError("noise_fraction must lie in [0, 1]")

    @property
    def n_corrupted(self) -> int:
        return int(math.floor(self.noise_fraction * self.clean.size))


def piecewise_constant_image(height: int, width: int, seed: int = 0,
                             shapes: int = 6) -> np.ndarray:
    """Grey background with random axis-aligned rectangles, values in ``[0,1]``."""
    rng = np.random.default_rng(seed)
    img = np.full((height, width), 0.5)
    for _ in range(shapes):
        r0, c0 = rng.integers(0, height - 1), rng.integers(0, width - 1)
        r1 = rng.integers(r0 + 1, height + 1)
        c1 = rng.integers(c0 + 1, width + 1)
        img[r0:r1, c0:c1] = rng.integers(0, 6) / 5.0
    return img


def add_impulse_noise(clean, fraction: float, seed: int = 0) -> ImageInstance:
    """Replace ``floor(fraction * N)`` pixels, chosen without replacement,
    with independent uniform ``[0, 1]`` values."""
    clean = np.asarray(clean, dtype=float)
    rng = np.random.default_rng(seed)
    count = int(math.floor(fraction * clean.size))
    idx = np.sort(rng.choice(clean.size, count, replace=False))
    noisy = clean.copy().reshape(-1)
    noisy[idx] = rng.random(count)
    return ImageInstance(clean, noisy.reshape(clean.shape), float(fraction), "random_value", idx)


def build_l0tv(image: ImageInstance, k: Optional[float] = None, p: int = 2) -> SparsityProblem:
    """``TV(x)  s.t. ||x - b||_0 <= k`` with ``b`` the noisy image.

    ``k`` defaults to the number of corrupted pixels. ``lipschitz_f`` uses
    ``||grad|| <= sqrt(8)`` and ``||.||_{p,1} <= sqrt(N) ||.||_2`` for p=2
    (``sqrt(2N)`` for p=1).
    """
    h, w = image.noisy.shape
    N = h * w
    if k is None:
        k = image.n_corrupted
    _check_k(k, N)
    scale = math.sqrt(N) if p == 2 else math.sqrt(2 * N)
    obj = ObjectiveSpec(N, [], [(TVNorm(p), AffineMap.grad2d(h, w))],
                        lipschitz_f=math.sqrt(8.0) * scale)
    amap = AffineMap.identity(N, offset=-image.noisy.reshape(-1))
    return SparsityProblem(obj, amap, k, name=f"l0tv_p{p}",
                           metadata={"shape": (h, w)})


def snr_metrics(x, clean, threshold: float = 2.0 / 255.0):
    """``(SNR0, SNR1, SNR2)``.

    ``SNR0 = 1 - #{|x - c| > threshold} / N``;
    ``SNRp = 10 log10(||c - mean(c)||_p^p / ||x - c||_p^p)``, ``+inf`` when the
    error vanishes.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    c = np.asarray(clean, dtype=float).reshape(-1)
    if x.shape != c.shape:
        raise ValueError("shape mismatch")
    err = np.abs(x - c)
    snr0 = 1.0 - np.count_nonzero(err > threshold) / c.size
    dev = np.abs(c - c.mean())
    out = [float(snr0)]
    for p in (1, 2):
        den = float(np.sum(err ** p))
        num = float(np.sum(dev ** p))
        if den == 0.0:
            out.append(math.inf)
        elif num == 0.0:
            out.append(-math.inf)
        else:
            out.append(10.0 * math.log10(num / den))
    return tuple(out)


# ---------------------------------------------------------------------------
# generic sparse least squares


def generate_sparse_quadratic(n: int = 64, k: int = 8, seed: int = 0,
                              coupling: float = 0.1, noise: float = 0.1) -> SparsityProblem:
    """``1/2 ||B x - y||^2  s.t. ||x||_0 <= k`` with ``B = I + coupling G/sqrt(n)``.

    ``lipschitz_f = ||B|| ||y||``: the gradient bound on ``{f <= f(0)}``.
    """
    rng = np.random.default_rng(seed)
    B = np.eye(n) + coupling * rng.standard_normal((n, n)) / math.sqrt(n)
    xt = np.zeros(n)
    supp = rng.choice(n, k, replace=False)
    xt[supp] = rng.choice([-1.0, 1.0], k) * (1.0 + rng.random(k))
    y = B @ xt + noise * rng.standard_normal(n)
    lip = float(np.linalg.norm(B, 2) * np.linalg.norm(y))
    obj = ObjectiveSpec(n, [QuadraticTerm.least_squares(B, y)], lipschitz_f=max(lip, 1e-12))
    return SparsityProblem(obj, AffineMap.identity(n), k, name="sparse_quadratic",
                           metadata={"true_x": xt, "design": B, "target": y})
