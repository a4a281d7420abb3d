import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from oracles import weighted_l1_enumerate
from sparsemp.convex_inner import (
    BoxIndicator,
    HingeSum,
    InnerDivergenceError,
    LinfNorm,
    LogisticLoss,
    ObjectiveSpec,
    QuadraticTerm,
    TVNorm,
    WeightedL1Quad,
    WeightedL1Subproblem,
    Workspace,
    ZeroPattern,
    composite_minimize,
    logistic_gradient,
    prox_hinge,
    prox_linf_compose,
    prox_tv_groups,
    soft_threshold,
    solve_weighted_l1,
)
from sparsemp.linops import AffineMap

seeds = st.integers(0, 2**31 - 1)


# -- worked examples ---------------------------------------------------------

def test_weighted_l1_examples():
    I2 = AffineMap.identity(2)
    sub = WeightedL1Subproblem(ObjectiveSpec(2), I2, w=1.0, q=0.0, g=0.0, mu=1.0,
                               x0=np.array([2.0, 0.1]), tol=1e-12)
    assert np.allclose(solve_weighted_l1(sub), [1.0, 0.0], atol=1e-8)
    f = ObjectiveSpec(2, [QuadraticTerm.squared_distance([3.0, 3.0])])
    sub = WeightedL1Subproblem(f, I2, w=0.0, q=0.0, g=0.0, mu=1.0, x0=np.ones(2), tol=1e-12)
    assert np.allclose(solve_weighted_l1(sub), [2.0, 2.0], atol=1e-8)
    f = ObjectiveSpec(1, [QuadraticTerm.squared_distance([1.0])])
    sub = WeightedL1Subproblem(f, AffineMap.identity(1), w=2.0, q=0.0, g=0.0, mu=0.0,
                               x0=np.zeros(1), tol=1e-12)
    assert np.allclose(solve_weighted_l1(sub), [0.0], atol=1e-8)


def test_logistic_gradient_examples():
    g = logistic_gradient(np.zeros(2), np.array([[1.0, 0.0]]), np.array([1.0]))
    assert np.allclose(g, [-0.5, 0.0])
    assert np.allclose(logistic_gradient(np.zeros(3), np.zeros((0, 3)), np.zeros(0), lam=1.0), 0)


def test_prox_examples():
    assert prox_hinge([2.0], 0.7)[0] == 2.0
    assert prox_hinge([-1.0], 0.5)[0] == pytest.approx(-0.5)
    assert prox_hinge([1.0], 0.5)[0] == 1.0
    assert np.allclose(prox_linf_compose([0.5, -0.2], 1.0), [0, 0])
    assert np.allclose(prox_linf_compose([3.0, 0.0], 1.0), [2, 0])
    assert np.allclose(prox_linf_compose([0.0, 0.0], 1.0), [0, 0])
    assert np.allclose(np.ravel(prox_tv_groups([3.0], [4.0], 5.0, 2)), [0, 0])
    assert np.allclose(np.ravel(prox_tv_groups([3.0], [4.0], 2.5, 2)), [1.5, 2.0])
    assert np.allclose(prox_tv_groups([-2.0], [0.0], 1.0, 1)[0], [-1.0])


def test_bad_inputs():
    with pytest.raises(ValueError):
        prox_linf_compose([1.0], 0.0)
    with pytest.raises(ValueError):
        prox_tv_groups([1.0], [1.0, 2.0], 1.0)
    with pytest.raises(ValueError):
        prox_tv_groups([1.0], [1.0], 1.0, p=3)
    with pytest.raises(ValueError):
        WeightedL1Subproblem(ObjectiveSpec(1), AffineMap.identity(1), -1.0, 0.0, 0.0, 1.0,
                             np.zeros(1))
    with pytest.raises(ValueError):
        WeightedL1Subproblem(ObjectiveSpec(1), AffineMap.identity(1), 1.0, 0.0, 0.0, -1.0,
                             np.zeros(1))


# -- gradient checks ---------------------------------------------------------

def _fd_grad(fun, x, h=1e-5):
    g = np.zeros_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        g[i] = (fun(x + e) - fun(x - e)) / (2 * h)
    return g


def _smooth_terms(rng):
    n = 5
    S = rng.standard_normal((7, n))
    t = (rng.random(7) < 0.5).astype(float)
    B = rng.standard_normal((4, n))
    return [LogisticLoss(S, t, 0.3), QuadraticTerm.least_squares(B, rng.standard_normal(4)),
            QuadraticTerm.squared_distance(rng.standard_normal(n), weight=2.0)]


@given(seeds)
def test_gradients_match_finite_differences(seed):
    rng = np.random.default_rng(seed)
    for term in _smooth_terms(rng):
        x = rng.standard_normal(5)
        fd = _fd_grad(term.value, x)
        assert np.allclose(term.grad(x), fd, rtol=1e-5, atol=1e-6)


@given(seeds)
def test_gradient_lipschitz_bounds(seed):
    rng = np.random.default_rng(seed)
    for term in _smooth_terms(rng):
        x, y = rng.standard_normal(5), rng.standard_normal(5)
        lhs = np.linalg.norm(term.grad(x) - term.grad(y))
        assert lhs <= term.lipschitz_grad * np.linalg.norm(x - y) * (1 + 1e-9) + 1e-12


# -- prox inequality ---------------------------------------------------------

def _prox_cases(rng):
    m = 6
    return [
        WeightedL1Quad(rng.random(m), rng.random(m), rng.standard_normal(m)),
        HingeSum(),
        LinfNorm(),
        TVNorm(1),
        TVNorm(2),
    ]


@given(seeds, st.floats(0.05, 5.0))
def test_prox_inequality(seed, step):
    rng = np.random.default_rng(seed)
    for term in _prox_cases(rng):
        v = rng.normal(0, 2, 6)
        p = term.prox(v, step)
        lhs = term.value(p) + np.sum((p - v) ** 2) / (2 * step)
        for _ in range(10):
            y = rng.normal(0, 2, 6)
            assert lhs <= term.value(y) + np.sum((y - v) ** 2) / (2 * step) + 1e-10


@given(seeds)
def test_indicator_proxes_project(seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(0, 2, 6)
    mask = rng.random(6) < 0.5
    p = ZeroPattern(mask).prox(v, 1.0)
    assert np.all(p[mask] == 0) and np.allclose(p[~mask], v[~mask])
    lo, hi = -rng.random(6), rng.random(6)
    p = BoxIndicator(lo, hi).prox(v, 0.3)
    assert np.allclose(p, np.clip(v, lo, hi))


@given(st.floats(-5, 5), st.floats(0, 3))
def test_soft_threshold_is_l1_prox(v, t):
    p = soft_threshold(np.array([v]), t)[0]
    grid = np.linspace(-6, 6, 2001)
    vals = t * np.abs(grid) + 0.5 * (grid - v) ** 2
    assert t * abs(p) + 0.5 * (p - v) ** 2 <= vals.min() + 1e-12


# -- solver ------------------------------------------------------------------

@given(seeds)
def test_weighted_l1_matches_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = 5
    Bm = rng.standard_normal((6, n))
    y = rng.standard_normal(6)
    f = ObjectiveSpec(n, [QuadraticTerm.least_squares(Bm, y)])
    D = AffineMap.second_difference(n, offset=rng.normal(0, 0.1, n - 2))
    w, q, g = rng.random(n - 2), rng.random(n - 2), rng.normal(0, 0.3, n - 2)
    mu = 0.1
    x0 = rng.standard_normal(n)
    sub = WeightedL1Subproblem(f, D, w, q, g, mu, x0, tol=1e-10, max_iter=20000)
    x = solve_weighted_l1(sub)
    H = Bm.T @ Bm + mu * np.eye(n)
    h = -Bm.T @ y - mu * x0
    x_ref, _ = weighted_l1_enumerate(H, h, D.toarray(), D.offset, w, q, g)
    assert sub.value(x) <= sub.value(x_ref) + 1e-8
    assert np.allclose(x, x_ref, atol=1e-5)


def test_active_set_finish_agrees_with_long_admm():
    rng = np.random.default_rng(3)
    n = 40
    f = ObjectiveSpec(n, [QuadraticTerm.squared_distance(np.cumsum(rng.normal(0, 0.3, n)))])
    D = AffineMap.second_difference(n)
    w = np.full(n - 2, 0.5)
    g = rng.normal(0, 0.1, n - 2)
    res = composite_minimize(f, [(WeightedL1Quad(w, 0.0, g), D)], 0.01, np.zeros(n),
                             tol=1e-8, max_iter=5000)
    assert res.method == "admm_active_set"
    # a long run without the piecewise-quadratic shortcut (nonquadratic wrapper)
    slow = ObjectiveSpec(n, [_Opaque(f.smooth_terms[0])])
    ref = composite_minimize(slow, [(WeightedL1Quad(w, 0.0, g), D)], 0.01, np.zeros(n),
                             tol=1e-12, max_iter=200000)
    val = lambda x: (f.value(x) + np.sum(w * np.abs(D.apply(x)) + g * D.apply(x))  # noqa: E731
                     + 0.005 * x @ x)
    assert val(res.x) <= val(ref.x) + 1e-8
    assert np.allclose(res.x, ref.x, atol=1e-4)


class _Opaque(QuadraticTerm):
    """Quadratic hidden from the exact-solve paths."""

    def __init__(self, inner):
        self._inner = inner
        self.lipschitz_grad = inner.lipschitz_grad
        self.hessian = None
        self.h = None

    def value(self, x):
        return self._inner.value(x)

    def grad(self, x):
        return self._inner.grad(x)


def test_subproblem_objective_never_increases():
    rng = np.random.default_rng(1)
    n = 30
    S = rng.standard_normal((50, n))
    f = ObjectiveSpec(n, [LogisticLoss(S, (rng.random(50) < 0.5).astype(float), 0.1)])
    D = AffineMap.second_difference(n)
    x0 = rng.standard_normal(n)
    sub = WeightedL1Subproblem(f, D, 0.3, 0.1, 0.0, 0.01, x0)
    res = solve_weighted_l1(sub, return_info=True)
    assert sub.value(res.x) <= sub.value(x0) + 1e-12


def test_box_and_zero_pattern_blocks():
    n = 4
    f = ObjectiveSpec(n, [QuadraticTerm.squared_distance([2.0, -3.0, 0.5, 1.0])])
    I = AffineMap.identity(n)
    blocks = [(BoxIndicator(-np.ones(n), np.ones(n)), I),
              (ZeroPattern(np.array([False, False, False, True])), I)]
    res = composite_minimize(f, blocks, 0.0, np.zeros(n), tol=1e-10, max_iter=5000)
    assert np.allclose(res.x, [1.0, -1.0, 0.5, 0.0], atol=1e-6)


def test_workspace_reuse_is_consistent():
    rng = np.random.default_rng(2)
    n = 20
    f = ObjectiveSpec(n, [QuadraticTerm.squared_distance(rng.standard_normal(n))])
    D = AffineMap.second_difference(n)
    ws = Workspace()
    xs = [solve_weighted_l1(WeightedL1Subproblem(f, D, 0.2, 0.0, 0.0, 0.01, np.zeros(n),
                                                 tol=1e-10), ws) for _ in range(2)]
    assert np.allclose(xs[0], xs[1], atol=1e-7)


def test_divergence_error_type():
    assert issubclass(InnerDivergenceError, RuntimeError)
