import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from sparsemp.core import count_nonzero
from sparsemp.problems import (
    SPARSITY_FRACTIONS,
    FeatureSelectionData,
    SegmentedRegressionInstance,
    add_impulse_noise,
    build_feature_selection,
    build_l0tv,
    build_mrf,
    build_segmented_regression,
    build_trend_filtering,
    generate_feature_selection,
    generate_mrf,
    generate_segmented_regression,
    generate_sparse_quadratic,
    generate_trend_series,
    mrf_decode,
    mrf_encode,
    mrf_energy,
    piecewise_constant_image,
    snr_metrics,
    sparsity_grid,
)

seeds = st.integers(0, 2**31 - 1)


def test_sparsity_grid():
    assert len(SPARSITY_FRACTIONS) == 20
    assert SPARSITY_FRACTIONS[0] == 0.01 and SPARSITY_FRACTIONS[-1] == 0.96
    grid = sparsity_grid(100)
    assert grid[0] == 1 and grid[-1] == 96
    assert all(1 <= k <= 99 for k in sparsity_grid(10))


def test_feature_data_validation():
    with pytest.raises(ValueError):
        FeatureSelectionData(np.ones((2, 2)), [1, 0])
    with pytest.raises(ValueError):
        FeatureSelectionData(np.ones((2, 2)), [1])
    with pytest.raises(ValueError):
        FeatureSelectionData(np.array([[np.nan]]), [1])


@given(seeds)
def test_feature_objectives_match_formulas(seed):
    rng = np.random.default_rng(seed)
    data = generate_feature_selection(15, 6, seed=seed, lam=0.3)
    x = rng.standard_normal(6)
    margins = data.labels * (data.features @ x)
    reg = 0.15 * x @ x
    logi = build_feature_selection(data, "logistic", 2)
    assert logi.objective.value(x) == pytest.approx(reg + np.sum(np.logaddexp(0, -margins)))
    hinge = build_feature_selection(data, "hinge", 2)
    assert hinge.objective.value(x) == pytest.approx(reg + np.sum(np.maximum(0, 1 - margins)))


@given(seeds)
def test_feature_lipschitz_bound_on_box(seed):
    rng = np.random.default_rng(seed)
    data = generate_feature_selection(15, 6, seed=seed, lam=0.3)
    for loss in ("logistic", "hinge"):
        prob = build_feature_selection(data, loss, 2, box_radius=3.0)
        x, y = (rng.uniform(-1, 1, 6) * 3 / math.sqrt(6) for _ in range(2))
        diff = abs(prob.objective.value(x) - prob.objective.value(y))
        assert diff <= prob.objective.lipschitz_f * np.linalg.norm(x - y) + 1e-12


def test_feature_bad_loss_and_k():
    data = generate_feature_selection(5, 4)
    with pytest.raises(ValueError):
        build_feature_selection(data, "squared", 1)
    with pytest.raises(ValueError):
        build_feature_selection(data, "logistic", 5)


def test_segmented_regression():
    inst = generate_segmented_regression(64, seed=1)
    assert inst.design.shape == (8, 64)
    assert np.allclose(np.linalg.norm(inst.design, axis=0), 1.0)
    assert inst.true_support.size == 4
    prob = build_segmented_regression(inst, 4)
    x = np.random.default_rng(0).standard_normal(64)
    A, b = inst.design, inst.observations
    assert prob.objective.value(x) == pytest.approx(np.max(np.abs(A.T @ (A @ x - b))))
    with pytest.raises(ValueError):
        SegmentedRegressionInstance(np.ones((2, 2)), np.ones(2), np.array([0]), 1.0)
    with pytest.raises(ValueError):
        generate_segmented_regression(8)


@given(seeds)
def test_segmented_lipschitz(seed):
    inst = generate_segmented_regression(32, seed=seed)
    prob = build_segmented_regression(inst, 2)
    rng = np.random.default_rng(seed)
    x, y = rng.standard_normal(32), rng.standard_normal(32)
    diff = abs(prob.objective.value(x) - prob.objective.value(y))
    assert diff <= prob.objective.lipschitz_f * np.linalg.norm(x - y) + 1e-12


def test_trend_filtering_adapter():
    y = generate_trend_series(300, seed=0)
    assert y.shape == (300,)
    assert np.array_equal(y, generate_trend_series(300, seed=0))
    prob = build_trend_filtering(y, 30)
    assert (prob.m, prob.n) == (298, 300)
    assert prob.objective.value(y) == 0.0
    assert prob.objective.lipschitz_f == pytest.approx(np.linalg.norm(y))
    with pytest.raises(ValueError):
        build_trend_filtering([1.0, 2.0], 0)
    with pytest.raises(ValueError):
        build_trend_filtering(y, 299)


def test_mrf_reformulation_exact_on_labels():
    Lap, b = generate_mrf(5, seed=3)
    prob = build_mrf(Lap, b)
    assert prob.k == 5 and prob.m == 10
    for bits in itertools.product((0.0, 1.0), repeat=5):
        x = np.array(bits)
        s = mrf_encode(x)
        assert prob.objective.value(s) == pytest.approx(mrf_energy(Lap, b, x))
        assert count_nonzero(prob.constraint_map.apply(s)) == 5
        assert np.array_equal(mrf_decode(s), x)
    # any non-label point needs more than n nonzeros
    s = np.array([1.0, -1.0, 0.3, 1.0, -1.0])
    assert count_nonzero(prob.constraint_map.apply(s)) == 6


def test_mrf_validation():
    with pytest.raises(ValueError):
        build_mrf(np.array([[0.0, 1.0], [0.0, 0.0]]), np.zeros(2))
    with pytest.raises(ValueError):
        build_mrf(-np.eye(2), np.zeros(2))
    with pytest.raises(ValueError):
        build_mrf(np.eye(2), np.zeros(2), formulation="pm_one")
    Lap, _ = generate_mrf(6, seed=0)
    assert np.allclose(Lap.sum(axis=1), 0) and np.linalg.eigvalsh(Lap)[0] >= -1e-12


@given(seeds, st.floats(0, 1))
def test_impulse_noise_count(seed, frac):
    clean = piecewise_constant_image(6, 7, seed=seed)
    inst = add_impulse_noise(clean, frac, seed=seed)
    assert inst.n_corrupted == math.floor(frac * 42)
    assert inst.corrupted.size == inst.n_corrupted
    untouched = np.setdiff1d(np.arange(42), inst.corrupted)
    assert np.array_equal(inst.noisy.reshape(-1)[untouched], clean.reshape(-1)[untouched])


def test_l0tv_adapter():
    clean = piecewise_constant_image(8, 8, seed=1)
    inst = add_impulse_noise(clean, 0.25, seed=1)
    prob = build_l0tv(inst)
    assert prob.k == 16
    z = prob.constraint_map.apply(inst.noisy.reshape(-1))
    assert count_nonzero(z) == 0
    assert count_nonzero(prob.constraint_map.apply(clean.reshape(-1))) <= 16
    gx = np.diff(clean, axis=1, append=clean[:, -1:])
    gy = np.diff(clean, axis=0, append=clean[-1:, :])
    assert prob.objective.value(clean.reshape(-1)) == pytest.approx(np.sum(np.hypot(gx, gy)))
    p1 = build_l0tv(inst, 4, p=1)
    assert p1.objective.value(clean.reshape(-1)) == pytest.approx(np.sum(np.abs(gx) + np.abs(gy)))


def test_snr_metrics():
    c = np.array([0.0, 1.0, 0.0, 1.0])
    snr0, snr1, snr2 = snr_metrics(c, c)
    assert snr0 == 1.0 and snr1 == math.inf and snr2 == math.inf
    x = c + np.array([0.5, 0, 0, 0])
    snr0, snr1, snr2 = snr_metrics(x, c)
    assert snr0 == 0.75
    assert snr1 == pytest.approx(10 * math.log10(2.0 / 0.5))
    assert snr2 == pytest.approx(10 * math.log10(1.0 / 0.25))
    assert snr_metrics(np.ones(3), np.zeros(3))[2] == -math.inf
    with pytest.raises(ValueError):
        snr_metrics(np.ones(3), np.ones(4))


def test_sparse_quadratic_generator():
    prob = generate_sparse_quadratic(20, 3, seed=4)
    B, y = prob.metadata["design"], prob.metadata["target"]
    x = np.random.default_rng(0).standard_normal(20)
    assert prob.objective.value(x) == pytest.approx(0.5 * np.sum((B @ x - y) ** 2))
    assert np.count_nonzero(prob.metadata["true_x"]) == 3
