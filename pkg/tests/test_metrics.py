"""OSPA / MOSPA / RMSE / convergence metrics against independent oracles."""

from __future__ import annotations

from itertools import permutations

import numpy as np
import pytest

from mvaslam.metrics import (DIVERGENCE_THRESHOLD, is_converged, mospa, ospa,
                             position_errors, rmse_over_runs)


def ospa_brute(x, y, cutoff, order):
    """Independent OSPA oracle: minimum over all injective assignments."""
    x = np.asarray(x, dtype=float).reshape(-1, 2)
    y = np.asarray(y, dtype=float).reshape(-1, 2)
    if len(x) == 0 and len(y) == 0:
        return 0.0
    if len(x) == 0 or len(y) == 0:
        return float(cutoff)
    if len(x) > len(y):
        x, y = y, x
    m, n = len(x), len(y)
    best = np.inf
    for perm in permutations(range(n), m):
        cost = sum(
            min(np.linalg.norm(x[i] - y[j]), cutoff) ** order
            for i, j in enumerate(perm))
        best = min(best, cost)
    return float(((best + cutoff ** order * (n - m)) / n) ** (1.0 / order))


# ---------------------------------------------------------------------------
# ospa examples


def test_ospa_identity_is_zero():
    assert ospa([(1.0, 1.0)], [(1.0, 1.0)]) == 0.0


def test_ospa_empty_vs_empty_is_zero():
    assert ospa([], []) == 0.0


def test_ospa_empty_vs_nonempty_is_cutoff():
    assert ospa([], [(0.0, 0.0)], cutoff=5.0) == 5.0
    assert ospa([(0.0, 0.0)], [], cutoff=5.0) == 5.0


def test_ospa_mixed_cardinality_example():
    # One matched pair at distance 1 plus one cardinality miss at cutoff 5,
    # averaged over the larger cardinality 2.
    val = ospa([(0.0, 0.0)], [(1.0, 0.0), (10.0, 10.0)], cutoff=5.0, order=1.0)
    assert val == pytest.approx(3.0, abs=1e-12)


def test_ospa_distances_clip_at_cutoff():
    val = ospa([(0.0, 0.0)], [(100.0, 0.0)], cutoff=5.0)
    assert val == pytest.approx(5.0, abs=1e-12)


def test_ospa_validates_params():
    with pytest.raises(ValueError):
        ospa([(0.0, 0.0)], [(0.0, 0.0)], cutoff=0.0)
    with pytest.raises(ValueError):
        ospa([(0.0, 0.0)], [(0.0, 0.0)], order=0.5)
    with pytest.raises(ValueError):
        ospa([(0.0, 0.0, 0.0)], [(0.0, 0.0)])


# ---------------------------------------------------------------------------
# ospa properties


def random_set(rng, max_n=5):
    n = int(rng.integers(0, max_n + 1))
    return rng.uniform(-8.0, 8.0, (n, 2))


def test_ospa_matches_brute_force(rng):
    for _ in range(300):
        x, y = random_set(rng), random_set(rng)
        c = float(rng.uniform(0.5, 6.0))
        p = float(rng.choice([1.0, 1.0, 2.0]))
        assert ospa(x, y, cutoff=c, order=p) == pytest.approx(
            ospa_brute(x, y, c, p), abs=1e-9)


def test_ospa_is_symmetric(rng):
    for _ in range(100):
        x, y = random_set(rng), random_set(rng)
        assert ospa(x, y) == pytest.approx(ospa(y, x), abs=1e-12)


def test_ospa_is_bounded_by_cutoff(rng):
    for _ in range(100):
        x, y = random_set(rng), random_set(rng)
        assert ospa(x, y, cutoff=5.0) <= 5.0 + 1e-12


def test_ospa_triangle_inequality_order_one(rng):
    for _ in range(200):
        x, y, z = random_set(rng), random_set(rng), random_set(rng)
        dxz = ospa(x, z, cutoff=5.0, order=1.0)
        dxy = ospa(x, y, cutoff=5.0, order=1.0)
        dyz = ospa(y, z, cutoff=5.0, order=1.0)
        assert dxz <= dxy + dyz + 1e-9


def test_ospa_zero_only_for_identical_sets(rng):
    x = random_set(rng, max_n=4)
    if len(x) == 0:
        x = np.array([[1.0, 2.0]])
    shuffled = x[rng.permutation(len(x))]
    assert ospa(x, shuffled) == pytest.approx(0.0, abs=1e-12)
    moved = x.copy()
    moved[0, 0] += 0.1
    assert ospa(x, moved) > 1e-3


# ---------------------------------------------------------------------------
# aggregation helpers


def test_mospa_single_run_is_itself():
    series = np.array([[1.0, 2.0, 3.0]])
    np.testing.assert_allclose(mospa(series), [1.0, 2.0, 3.0])


def test_mospa_averages_across_runs():
    series = np.array([[2.0, 2.0], [4.0, 4.0]])
    np.testing.assert_allclose(mospa(series), [3.0, 3.0])


def test_mospa_matches_direct_mean(rng):
    series = rng.uniform(0.0, 5.0, (7, 40))
    np.testing.assert_allclose(mospa(series), series.mean(axis=0), atol=1e-15)


def test_mospa_rejects_non_2d():
    with pytest.raises(ValueError):
        mospa(np.zeros(5))


def test_position_errors_basic():
    est = np.array([[0.0, 0.0, 9.0, 9.0], [1.0, 1.0, 9.0, 9.0]])
    tru = np.array([[0.0, 0.0, 0.0, 0.0], [1.0, 0.0, 0.0, 0.0]])
    np.testing.assert_allclose(position_errors(est, tru), [0.0, 1.0])


def test_position_errors_requires_matching_length():
    with pytest.raises(ValueError):
        position_errors(np.zeros((3, 2)), np.zeros((4, 2)))


def test_is_converged_all_below_threshold():
    tru = np.zeros((10, 2))
    est = np.full((10, 2), 0.1 / np.sqrt(2.0))
    assert is_converged(est, tru)


def test_is_converged_single_excursion_fails():
    tru = np.zeros((10, 2))
    est = np.zeros((10, 2))
    est[4, 0] = 0.6
    assert not is_converged(est, tru)


def test_is_converged_boundary_is_strict():
    tru = np.zeros((3, 2))
    est = np.zeros((3, 2))
    est[1, 0] = DIVERGENCE_THRESHOLD
    assert not is_converged(est, tru)


def test_is_converged_velocity_flag():
    tru = np.zeros((3, 4))
    est = np.zeros((3, 4))
    est[1, 2] = 0.7
    assert is_converged(est, tru)
    assert not is_converged(est, tru, include_velocity=True)


def test_rmse_constant_offset():
    tru = np.zeros((4, 6, 4))
    est = tru.copy()
    est[:, :, 0] += 0.1
    np.testing.assert_allclose(rmse_over_runs(est, tru),
                               np.full(6, 0.1), atol=1e-12)


def test_rmse_respects_mask(rng):
    tru = np.zeros((3, 5, 4))
    est = tru.copy()
    est[0, :, 0] += 1.0
    est[1, :, 0] += 2.0
    est[2, :, 0] += 100.0
    out = rmse_over_runs(est, tru, mask=[True, True, False])
    np.testing.assert_allclose(out, np.full(5, np.sqrt(2.5)), atol=1e-12)


def test_rmse_empty_mask_gives_nan():
    tru = np.zeros((2, 5, 4))
    out = rmse_over_runs(tru, tru, mask=[False, False])
    assert np.isnan(out).all()


def test_rmse_matches_direct_recomputation(rng):
    est = rng.normal(size=(6, 9, 4))
    tru = rng.normal(size=(6, 9, 4))
    direct = np.sqrt(np.mean(np.sum((est[:, :, :2] - tru[:, :, :2]) ** 2,
                                    axis=-1), axis=0))
    np.testing.assert_allclose(rmse_over_runs(est, tru), direct, atol=1e-12)
