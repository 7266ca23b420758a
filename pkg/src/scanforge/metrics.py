"""Statistical metrics over edited regions.

Occupancy is compared in bird's-eye view: a 2D histogram over
(azimuth, radius) counting occupied voxels across the elevation axis,
optionally restricted to a generated region and re-normalized. JSD and
MMD compare histograms; Chamfer distance compares raw clouds against
oracle ground truth.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import EmptyCloud, EmptySet, UnnormalizedInput
from .geometry import PointCloud
from .grid import OccupancyGrid, VoxelMask

NORMALIZATION_TOL = 1e-9


@dataclass(frozen=True)
class BEVHistogram:
    """Occupancy histogram over (itheta, ir) bins."""

    values: np.ndarray
    normalized: bool = False

    def __post_init__(self):
        values = np.ascontiguousarray(self.values, dtype=np.float64)
        if values.ndim != 2:
            raise ValueError("histogram values must be 2D (itheta, ir)")
        if (values < 0).any():
            raise ValueError("histogram values must be non-negative")
        total = values.sum()
        if self.normalized and total > 0 and abs(total - 1.0) > NORMALIZATION_TOL:
            raise ValueError("normalized histogram must sum to 1")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)


def bev_histogram(grid: OccupancyGrid, region: VoxelMask | None = None) -> BEVHistogram:
    """Occupied-voxel counts per (azimuth, radius) bin, normalized.

    With a region, (theta, r) bins whose elevation column holds no
    masked voxel are zeroed before normalization. An all-zero result
    keeps normalized=False.
    """
    counts = grid.occupied.sum(axis=2).T.astype(np.float64)
    if region is not None:
        if region.shape != grid.config.shape:
            raise ValueError("region shape does not match the grid")
        counts = counts * region.any(axis=2).T
    total = counts.sum()
    if total > 0:
        return BEVHistogram(counts / total, normalized=True)
    return BEVHistogram(counts, normalized=False)


def region_bin_count(region: VoxelMask) -> int:
    """Number of (theta, r) histogram bins a region leaves active."""
    return int(region.any(axis=2).sum())


def _check_normalized(h: BEVHistogram, name: str) -> None:
    if not h.normalized:
        raise UnnormalizedInput(f"{name} is not normalized")


def jsd(h1: BEVHistogram, h2: BEVHistogram, base: float | None = None) -> float:
    """Jensen-Shannon divergence between two normalized histograms.

    Natural log by default (maximum ln 2); pass base=2 for the [0, 1]
    convention. Bins where both histograms are zero contribute nothing.
    """
    _check_normalized(h1, "first histogram")
    _check_normalized(h2, "second histogram")
    if h1.values.shape != h2.values.shape:
        raise ValueError("histogram shapes differ")
    p = h1.values.ravel()
    q = h2.values.ravel()
    m = 0.5 * (p + q)
    live = m > 0
    p, q, m = p[live], q[live], m[live]
    with np.errstate(divide="ignore", invalid="ignore"):
        kl_p = np.where(p > 0, p * (np.log(p) - np.log(m)), 0.0)
        kl_q = np.where(q > 0, q * (np.log(q) - np.log(m)), 0.0)
    value = float(0.5 * kl_p.sum() + 0.5 * kl_q.sum())
    value = max(0.0, value)
    if base is not None:
        value /= math.log(base)
    return value


def _flatten_set(hs) -> np.ndarray:
    vecs = []
    for k, h in enumerate(hs):
        _check_normalized(h, f"histogram {k}")
        vecs.append(h.values.ravel())
    if not vecs:
        return np.zeros((0, 0))
    return np.stack(vecs)


def median_bandwidth(hs1, hs2) -> float:
    """Median pairwise distance over the pooled histogram vectors.

    Falls back to 1.0 when every pooled vector coincides (a zero
    bandwidth would break the kernel).
    """
    sets = [v for v in (_flatten_set(hs1), _flatten_set(hs2)) if v.shape[0]]
    if not sets:
        return 1.0
    pooled = np.concatenate(sets)
    if pooled.shape[0] < 2:
        return 1.0
    d2 = _sq_dists(pooled, pooled)
    upper = d2[np.triu_indices(pooled.shape[0], k=1)]
    med = float(np.sqrt(np.median(upper)))
    return med if med > 0 else 1.0


def _sq_dists(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aa = (a * a).sum(axis=1)
    bb = (b * b).sum(axis=1)
    d2 = aa[:, None] + bb[None, :] - 2.0 * (a @ b.T)
    return np.maximum(d2, 0.0)


def mmd(hs1, hs2, bandwidth: float | None = None) -> float:
    """Squared maximum mean discrepancy with a Gaussian kernel.

    Uses the unbiased estimator (diagonal terms excluded) when both
    sets have at least two members, the biased one otherwise, and
    clamps at 0. Bandwidth defaults to the median heuristic; read it
    back via median_bandwidth for reporting.
    """
    a = _flatten_set(hs1)
    b = _flatten_set(hs2)
    if a.shape[0] == 0 or b.shape[0] == 0:
        raise EmptySet("mmd needs at least one histogram per side")
    if a.shape[1] != b.shape[1]:
        raise ValueError("histogram shapes differ between the sets")
    if bandwidth is None:
        bandwidth = median_bandwidth(hs1, hs2)
    if bandwidth <= 0:
        raise ValueError("bandwidth must be positive")
    gamma = 1.0 / (2.0 * bandwidth * bandwidth)
    k_aa = np.exp(-gamma * _sq_dists(a, a))
    k_bb = np.exp(-gamma * _sq_dists(b, b))
    k_ab = np.exp(-gamma * _sq_dists(a, b))
    m, n = a.shape[0], b.shape[0]
    if m > 1 and n > 1:
        term_a = (k_aa.sum() - np.trace(k_aa)) / (m * (m - 1))
        term_b = (k_bb.sum() - np.trace(k_bb)) / (n * (n - 1))
    else:
        # The unbiased estimator is undefined for singleton sets; fall
        # back to the biased form so tiny sets still compare.
        term_a = k_aa.mean()
        term_b = k_bb.mean()
    value = float(term_a + term_b - 2.0 * k_ab.mean())
    return max(0.0, value)


def chamfer(c1: PointCloud | np.ndarray, c2: PointCloud | np.ndarray) -> float:
    """Symmetric Chamfer distance: sum of both directed mean NN distances."""
    a = c1.xyz if isinstance(c1, PointCloud) else np.asarray(c1, dtype=np.float64)
    b = c2.xyz if isinstance(c2, PointCloud) else np.asarray(c2, dtype=np.float64)
    if len(a) == 0 or len(b) == 0:
        raise EmptyCloud("chamfer distance needs non-empty clouds")
    d_ab, _ = cKDTree(b).query(a, k=1)
    d_ba, _ = cKDTree(a).query(b, k=1)
    return float(d_ab.mean() + d_ba.mean())
