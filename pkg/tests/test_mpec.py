import math

import numpy as np
import pytest

from sparsemp.convex_inner import ObjectiveSpec, QuadraticTerm
from sparsemp.core import SolverConfig, SparsityProblem, count_nonzero
from sparsemp.linops import AffineMap
from sparsemp.mpec import (
    AdmState,
    EpmState,
    adm_solve,
    augmented_lagrangian,
    epm_solve,
    kkt_residuals,
    penalty_cap,
    penalty_update_bound,
)
from sparsemp.problems import build_trend_filtering, generate_sparse_quadratic


def toy():
    obj = ObjectiveSpec(2, [QuadraticTerm.squared_distance([5.0, 0.1])], lipschitz_f=6.0)
    return SparsityProblem(obj, AffineMap.identity(2), 1)


def test_epm_toy():
    res = epm_solve(toy())
    assert res.converged
    assert np.allclose(res.x_final, [5.0, 0.0], atol=1e-6)
    assert res.complementarity_gap <= 1e-6
    assert res.l0_achieved == 1
    assert res.info["rho_final"] <= (1 + 1e-6) * 6.0


def test_adm_toy():
    res = adm_solve(toy())
    assert res.converged
    assert np.allclose(res.x_final, [5.0, 0.0], atol=1e-6)
    assert res.complementarity_gap <= 1e-6


def test_penalty_update_bound_formula():
    assert penalty_update_bound(1.0, 10.0, 1e-3, 0.01) == 20


def test_augmented_lagrangian_value():
    obj = ObjectiveSpec(1, [QuadraticTerm.squared_distance([0.0])])
    prob = SparsityProblem(obj, AffineMap.identity(1, offset=[0.5]), 0)
    lag = augmented_lagrangian(prob, np.zeros(1), np.ones(1), np.array([0.01]), 0.01)
    assert lag == pytest.approx(0.0 + 0.01 * 0.5 + 0.005 * 0.25)


def test_multiplier_update_one_step():
    prob = toy()
    cfg = SolverConfig(max_outer=1, complete_unconverged=False)
    res = adm_solve(prob, cfg)
    st = res.info["state"]
    z = np.abs(prob.constraint_map.apply(st.x))
    assert np.allclose(st.pi, cfg.eta + cfg.alpha * z * st.v, rtol=0, atol=1e-15)


def test_kkt_residual_examples():
    res = epm_solve(toy())
    r = kkt_residuals(res.info["state"], toy())
    assert r.max() <= 1e-5
    obj = ObjectiveSpec(3, [QuadraticTerm.squared_distance(np.zeros(3))])
    prob = SparsityProblem(obj, AffineMap.identity(3), 1)
    r = kkt_residuals(EpmState(np.zeros(3), np.zeros(3), 1.0, 0), prob)
    assert r.stationarity == pytest.approx(0.0, abs=1e-12)
    assert r.feasibility == pytest.approx(0.0, abs=1e-12)
    r = kkt_residuals(EpmState(np.zeros(3), np.array([1.0, 1.0, 0.0]), 1.0, 0), prob)
    assert r.dual_feasibility == pytest.approx(1.0)
    r = kkt_residuals(AdmState(np.zeros(3), np.ones(3), np.full(3, 0.01), 0.01, 0), prob)
    assert r.max() <= 1e-9


def test_epm_state_invariants_along_run():
    prob = generate_sparse_quadratic(32, 4, seed=5)
    res = epm_solve(prob)
    u = res.info["u"]
    assert np.sum(np.abs(u)) <= prob.k + 1e-9 and np.all(np.abs(u) <= 1 + 1e-12)
    assert all(rec.gap >= -1e-9 for rec in res.trace)
    rhos = [rec.penalty for rec in res.trace]
    assert all(b >= a for a, b in zip(rhos, rhos[1:]))


def test_adm_state_invariants_along_run():
    prob = generate_sparse_quadratic(32, 4, seed=5)
    res = adm_solve(prob)
    v = res.info["v"]
    assert np.all(v >= -1e-12) and np.all(v <= 1 + 1e-12)
    assert np.sum(1 - v) <= prob.k + 1e-9
    assert all(rec.extras["pi_min_increment"] >= 0 for rec in res.trace)


def test_rank_deficient_cap_falls_back(caplog):
    obj = ObjectiveSpec(2, [QuadraticTerm.squared_distance([1.0, 2.0])], lipschitz_f=3.0)
    amap = AffineMap.stacked([AffineMap.identity(2), AffineMap.identity(2)])
    prob = SparsityProblem(obj, amap, 2)
    cap, sigma, ok = penalty_cap(prob, SolverConfig(rho_max=123.0))
    assert cap == 123.0 and not ok and math.isnan(sigma)
    assert "rho_max" in caplog.text
    prob.sigma_override = 0.5
    cap, sigma, ok = penalty_cap(prob, SolverConfig())
    assert ok and cap == pytest.approx((1 + 1e-6) * 3.0 / 0.5)


def test_unconverged_run_is_completed_and_flagged():
    prob = generate_sparse_quadratic(32, 4, seed=1)
    res = epm_solve(prob, SolverConfig(max_outer=3))
    assert not res.converged
    assert res.info["completed"]
    assert res.l0_achieved <= prob.k
    assert "x_last" in res.info
    res = epm_solve(prob, SolverConfig(max_outer=3, complete_unconverged=False))
    assert not res.info["completed"]


def test_trend_filtering_epm_feasible():
    t = np.arange(60.0)
    y = np.where(t < 30, t / 30, 2 - t / 30)
    prob = build_trend_filtering(y, 1)
    res = epm_solve(prob)
    assert res.converged
    assert count_nonzero(prob.constraint_map.apply(res.x_final)) <= 1
    assert res.objective_value < 1e-6


def test_solver_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(rho0=0)
    with pytest.raises(ValueError):
        SolverConfig(T=0)


def test_k_equal_m_and_zero():
    obj = ObjectiveSpec(2, [QuadraticTerm.squared_distance([5.0, 0.1])], lipschitz_f=6.0)
    full = epm_solve(SparsityProblem(obj, AffineMap.identity(2), 2))
    assert np.allclose(full.x_final, [5.0, 0.1], atol=1e-6)
    assert full.info["vacuous"] and full.converged
    none = adm_solve(SparsityProblem(obj, AffineMap.identity(2), 0))
    assert np.allclose(none.x_final, 0.0, atol=1e-8)
