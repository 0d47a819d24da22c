import math

import numpy as np
import pytest

from compadre.core import Effect
from compadre.simulation import (
    SimSetting,
    TrueModel,
    aggregate,
    eval_function,
    mad_ratios,
    run_campaign,
    sample_true_model,
    score,
    simulate,
    toeplitz_cov,
)


def test_toeplitz_zero_rho_is_identity():
    np.testing.assert_array_equal(toeplitz_cov(4, 0.0), np.eye(4))


def test_toeplitz_three_by_three():
    expected = [[1, 0.5, 0.25], [0.5, 1, 0.5], [0.25, 0.5, 1]]
    np.testing.assert_allclose(toeplitz_cov(3, 0.5), expected, rtol=0, atol=0)


def test_toeplitz_positive_definite():
    assert np.linalg.eigvalsh(toeplitz_cov(10, 0.9))[0] > 0


def _scalar_f(fid, delta, x):
    if fid == 1:
        return delta * (1 - math.exp(-2 * x))
    if fid == 2:
        return delta * x * x
    if fid == 3:
        return delta * x * x * x
    if fid == 4:
        return delta / (math.sqrt(2 * math.pi) * 0.1) * math.exp(-x * x / 0.02)
    return delta * x


def test_functions_match_scalar_evaluator():
    grid = np.linspace(-1, 1, 20)
    for fid in range(1, 6):
        expected = [_scalar_f(fid, 1.7, x) for x in grid]
        np.testing.assert_allclose(eval_function(fid, 1.7, grid), expected, rtol=1e-12, atol=1e-12)


def test_function_reference_values():
    assert eval_function(1, 1.0, np.array([0.0]))[0] == 0.0
    assert eval_function(5, 2.0, np.array([0.5]))[0] == 1.0
    assert abs(eval_function(4, 1.0, np.array([0.0]))[0] - 3.989422804014327) < 1e-12


def test_unknown_function():
    with pytest.raises(ValueError):
        eval_function(6, 1.0, np.zeros(2))


def test_true_model_structure():
    for seed in range(200):
        truth = sample_true_model(10, 10, np.random.Generator(np.random.Philox(seed)))
        active = np.flatnonzero(truth.nonnull.any(axis=0))
        assert active.size == 4 and np.all(active < 5)
        np.testing.assert_array_equal(active, truth.active_responses)
        counts = truth.nonnull.sum(axis=0)[active]
        assert np.all((counts >= 1) & (counts <= 5))
        assert not truth.nonnull[:, 5:].any()


def test_function_frequencies():
    ids = []
    counts = np.zeros(6)
    for seed in range(10_000):
        truth = sample_true_model(10, 10, np.random.Generator(np.random.Philox(seed)))
        a = truth.assignment
        ids.append(a[a != 0])
        for q in truth.active_responses:
            counts[truth.nonnull[:, q].sum()] += 1
    ids = np.concatenate(ids)
    assert 0.48 <= np.mean(ids == 5) <= 0.52
    share = counts[1:] / counts[1:].sum()
    assert np.all(np.abs(share - 0.2) < 0.01)


def test_simulate_deterministic():
    s = SimSetting(seed=11)
    a, b = simulate(s), simulate(s)
    assert a.Y.tobytes() == b.Y.tobytes() and a.X.tobytes() == b.X.tobytes()
    assert simulate(SimSetting(seed=12)).Y.tobytes() != a.Y.tobytes()


def test_simulate_ranges_and_signal():
    d = simulate(SimSetting(delta=1.0, seed=5))
    assert d.X.min() >= -1 and d.X.max() <= 1
    assert d.Y.shape == (250, 10)
    np.testing.assert_array_equal(d.true_f[:, 5:], 0.0)


def test_error_covariance_converges_to_toeplitz():
    d = simulate(SimSetting(n=100_000, p=5, Q=5, rho=0.7, delta=0.0, seed=3))
    S = np.cov(d.Y, rowvar=False)
    target = toeplitz_cov(5, 0.7)
    assert np.max(np.abs(S - target) / target) < 0.02


def test_uncorrelated_errors_stay_small():
    d = simulate(SimSetting(n=2000, rho=0.0, delta=0.0, seed=8))
    C = np.corrcoef(d.Y, rowvar=False)
    assert np.max(np.abs(C - np.eye(10))) < 0.15


def test_shape_design():
    d = simulate(SimSetting(rho=0.7, delta=2.0, shape=4, seed=1))
    assert d.truth.nonnull.sum() == 2
    assert d.truth.assignment[0, 0] == 4 and d.truth.assignment[1, 1] == 4
    np.testing.assert_allclose(d.true_f[:, 0], eval_function(4, 2.0, d.X[:, 0]))


def _truth(mask):
    return TrueModel(np.asarray(mask, dtype=int), np.array([0]))


def test_score_perfect():
    mask = np.zeros((3, 2), dtype=int)
    mask[0, 0] = mask[2, 1] = 5
    labels = np.where(mask != 0, Effect.LINEAR, Effect.NULL)
    out = score(labels, _truth(mask))
    assert out["tpr"] == 1.0 and out["fpr"] == 0.0


def test_score_all_null():
    mask = np.zeros((3, 2), dtype=int)
    mask[1, 1] = 2
    out = score(np.zeros((3, 2)), _truth(mask))
    assert out["tpr"] == 0.0 and out["fpr"] == 0.0


def test_score_hand_case():
    mask = np.zeros((5, 2), dtype=int)
    mask[0, 0] = mask[1, 0] = 1
    labels = np.zeros((5, 2), dtype=int)
    labels[0, 0] = Effect.NONLINEAR
    labels[4, 1] = Effect.LINEAR
    out = score(labels, _truth(mask))
    assert out["tpr"] == 0.5 and out["fpr"] == 0.125


def test_score_empty_truth():
    assert score(np.zeros((2, 2)), _truth(np.zeros((2, 2))))["tpr"] is None


def test_score_mad_centers_truth():
    f = np.array([[1.0], [3.0]])
    out = score(np.zeros((1, 1)), _truth(np.ones((1, 1))), np.array([[-1.0], [1.0]]), f)
    assert out["mad"] == 0.0


def test_score_permutation_equivariant(rng):
    mask = (rng.uniform(size=(6, 4)) < 0.3).astype(int)
    labels = (rng.uniform(size=(6, 4)) < 0.4).astype(int)
    rows, cols = rng.permutation(6), rng.permutation(4)
    a = score(labels, _truth(mask))
    b = score(labels[rows][:, cols], _truth(mask[rows][:, cols]))
    assert a == b


def test_campaign_rows_and_aggregate():
    s = SimSetting(n=80, p=5, Q=5, rho=0.5, delta=1.0, seed=2)
    rows = run_campaign(s, 2, ("compadre", "padre", "lasso"))
    assert [r["method"] for r in rows] == ["compadre", "padre", "lasso"] * 2
    assert [r["replicate"] for r in rows] == [0, 0, 0, 1, 1, 1]
    agg = aggregate(rows)
    assert [a["method"] for a in agg] == ["compadre", "padre", "lasso"]
    assert mad_ratios(rows).size == 2
    again = run_campaign(s, 2, ("compadre", "padre", "lasso"))
    assert rows == again
