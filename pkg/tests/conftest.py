import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from scanforge.geometry import BoundingBox, PointCloud
from scanforge.grid import GridConfig
from scanforge.simulate import AnalyticScene, VerticalWall, raycast_scan


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture
def small_cfg():
    """A coarse grid that keeps loop-heavy tests fast."""
    return GridConfig(n_r=64, n_theta=90, n_phi=16, r_max=32.0,
                      phi_min=80.0, phi_max=120.0)


@pytest.fixture
def flat_scene():
    """Flat ground at z = -1.8 with one car-sized box 10 m out."""
    box = BoundingBox((10.0, 0.0, -1.8 + 0.85), (4.2, 1.8, 1.7), 0.0)
    return AnalyticScene((0.0, 0.0, -1.8), ((box, "car"),))


@pytest.fixture
def walled_scene():
    """Ground plus four walls, so every ray returns something."""
    walls = tuple(VerticalWall(a, 30.0) for a in
                  (0.0, np.pi / 2.0, np.pi, 3.0 * np.pi / 2.0))
    box = BoundingBox((8.0, 3.0, -1.9 + 0.8), (4.4, 1.9, 1.6), 0.4)
    return AnalyticScene((0.0, 0.0, -1.9), ((box, "car"),), walls)


def random_cloud(rng, n, labels=False, r_lo=1.0, r_hi=45.0):
    """Uniform-ish points in the default grid's range."""
    r = rng.uniform(r_lo, r_hi, n)
    theta = rng.uniform(0.0, 2.0 * np.pi, n)
    phi = np.radians(rng.uniform(80.0, 120.0, n))
    xyz = np.stack([r * np.sin(phi) * np.cos(theta),
                    r * np.sin(phi) * np.sin(theta),
                    r * np.cos(phi)], axis=1)
    lab = rng.integers(0, 32, n).astype(np.uint8) if labels else None
    return PointCloud(xyz, rng.uniform(0.0, 1.0, n),
                      rng.integers(0, 32, n).astype(np.int32), lab)
