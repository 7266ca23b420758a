import math

import numpy as np
import pytest

from scanforge.errors import EmptyCloud, EmptySet, UnnormalizedInput
from scanforge.geometry import PointCloud
from scanforge.grid import GridConfig, OccupancyGrid, voxelize
from scanforge.metrics import (BEVHistogram, bev_histogram, chamfer, jsd,
                               median_bandwidth, mmd, region_bin_count)
from oracles import brute_chamfer

LN2 = 0.6931471805599453


def _hist(values):
    values = np.asarray(values, dtype=np.float64)
    total = values.sum()
    return BEVHistogram(values / total, normalized=True)


def test_histogram_validation():
    with pytest.raises(ValueError):
        BEVHistogram(np.array([1.0, 2.0]))  # 1D
    with pytest.raises(ValueError):
        BEVHistogram(np.array([[-1.0, 2.0]]))
    with pytest.raises(ValueError):
        BEVHistogram(np.array([[0.4, 0.4]]), normalized=True)
    h = BEVHistogram(np.zeros((2, 2)), normalized=True)  # all-zero allowed
    assert h.values.sum() == 0.0


def test_bev_histogram_shape_and_counts(small_cfg):
    occ = np.zeros(small_cfg.shape, dtype=bool)
    occ[3, 7, 2] = True
    occ[3, 7, 9] = True  # same BEV bin, two elevation slots
    occ[10, 20, 0] = True
    h = bev_histogram(OccupancyGrid(small_cfg, occ))
    assert h.values.shape == (small_cfg.n_theta, small_cfg.n_r)
    assert h.normalized
    assert h.values[7, 3] == pytest.approx(2.0 / 3.0)
    assert h.values[20, 10] == pytest.approx(1.0 / 3.0)


def test_bev_histogram_region_zeroing(small_cfg):
    occ = np.zeros(small_cfg.shape, dtype=bool)
    occ[3, 7, 2] = True
    occ[10, 20, 0] = True
    region = np.zeros(small_cfg.shape, dtype=bool)
    region[:, 7, :] = True
    h = bev_histogram(OccupancyGrid(small_cfg, occ), region)
    assert h.values[7, 3] == 1.0
    assert h.values[20, 10] == 0.0
    assert region_bin_count(region) == small_cfg.n_r
    empty_region = np.zeros(small_cfg.shape, dtype=bool)
    h0 = bev_histogram(OccupancyGrid(small_cfg, occ), empty_region)
    assert not h0.normalized and h0.values.sum() == 0.0


def test_jsd_identities():
    h = _hist([[3.0, 1.0], [0.0, 2.0]])
    assert jsd(h, h) == 0.0
    a = _hist([[1.0, 0.0], [0.0, 0.0]])
    b = _hist([[0.0, 0.0], [0.0, 1.0]])
    assert abs(jsd(a, b) - LN2) <= 1e-9
    assert abs(jsd(a, b, base=2.0) - 1.0) <= 1e-9
    assert jsd(a, b) >= jsd(a, a)


def test_jsd_symmetry_and_bounds(rng):
    for _ in range(50):
        a = _hist(rng.random((6, 8)))
        b = _hist(rng.random((6, 8)))
        d = jsd(a, b)
        assert d == pytest.approx(jsd(b, a), abs=1e-15)
        assert 0.0 <= d <= LN2 + 1e-12


def test_jsd_rejects_unnormalized():
    raw = BEVHistogram(np.array([[1.0, 2.0]]))
    ok = _hist([[1.0, 2.0]])
    with pytest.raises(UnnormalizedInput):
        jsd(raw, ok)
    with pytest.raises(UnnormalizedInput):
        jsd(ok, raw)
    with pytest.raises(ValueError):
        jsd(ok, _hist(np.ones((3, 3))))


def test_mmd_identities(rng):
    hs = [_hist(rng.random((5, 5))) for _ in range(4)]
    assert mmd(hs, list(hs)) <= 1e-12
    other = [_hist(rng.random((5, 5)) + np.eye(5)) for _ in range(4)]
    assert mmd(hs, other) > mmd(hs, list(hs))
    with pytest.raises(EmptySet):
        mmd([], hs)


def test_mmd_singleton_closed_form():
    a = _hist([[1.0, 0.0]])
    b = _hist([[0.0, 1.0]])
    sigma = 0.7
    gamma = 1.0 / (2.0 * sigma * sigma)
    d2 = 2.0  # |(1,0)-(0,1)|^2
    want = 1.0 + 1.0 - 2.0 * math.exp(-gamma * d2)
    assert mmd([a], [b], bandwidth=sigma) == pytest.approx(want, abs=1e-12)


def test_mmd_matches_loop_estimator(rng):
    hs1 = [_hist(rng.random((4, 4))) for _ in range(5)]
    hs2 = [_hist(rng.random((4, 4))) for _ in range(3)]
    sigma = median_bandwidth(hs1, hs2)
    a = np.stack([h.values.ravel() for h in hs1])
    b = np.stack([h.values.ravel() for h in hs2])

    def k(u, v):
        return math.exp(-np.sum((u - v) ** 2) / (2.0 * sigma * sigma))

    m, n = len(a), len(b)
    t1 = sum(k(a[i], a[j]) for i in range(m) for j in range(m) if i != j) / (m * (m - 1))
    t2 = sum(k(b[i], b[j]) for i in range(n) for j in range(n) if i != j) / (n * (n - 1))
    t3 = sum(k(a[i], b[j]) for i in range(m) for j in range(n)) / (m * n)
    want = max(0.0, t1 + t2 - 2.0 * t3)
    assert mmd(hs1, hs2) == pytest.approx(want, abs=1e-12)


def test_median_bandwidth_fallback():
    h = _hist([[1.0, 1.0]])
    assert median_bandwidth([h], [h]) == 1.0
    assert median_bandwidth([h], []) == 1.0


def test_chamfer_examples():
    a = np.array([[0.0, 0.0, 0.0]])
    b = np.array([[1.0, 0.0, 0.0]])
    assert chamfer(a, b) == pytest.approx(2.0)
    assert chamfer(a, a) == 0.0
    cloud = PointCloud(a, np.zeros(1), np.zeros(1, np.int32))
    assert chamfer(cloud, cloud) == 0.0
    with pytest.raises(EmptyCloud):
        chamfer(a, np.zeros((0, 3)))


def test_chamfer_matches_bruteforce(rng):
    a = rng.normal(0.0, 5.0, (500, 3))
    b = rng.normal(0.5, 5.0, (500, 3))
    assert chamfer(a, b) == pytest.approx(brute_chamfer(a, b), abs=1e-9)


def test_chamfer_asymmetric_sizes(rng):
    a = rng.normal(0.0, 2.0, (40, 3))
    b = np.concatenate([a, a + 0.001])
    assert chamfer(a, b) <= 0.002


def test_end_to_end_histogram_jsd(rng, small_cfg):
    # identical clouds give zero divergence through the whole pipeline
    xyz = rng.normal(0.0, 8.0, (2000, 3))
    cloud = PointCloud(xyz, np.zeros(2000), np.zeros(2000, np.int32))
    h1 = bev_histogram(voxelize(cloud, small_cfg))
    h2 = bev_histogram(voxelize(cloud, small_cfg))
    assert jsd(h1, h2) == 0.0
    assert mmd([h1], [h2]) <= 1e-12
