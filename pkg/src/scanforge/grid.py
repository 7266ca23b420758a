"""Spherical voxel grid: binning, occupancy, per-ray occlusion.

The grid spans radius, azimuth and polar angle with half-open bins
[lo, hi). Azimuth theta is measured from +x toward +y in [0, 360)
degrees; phi is the polar angle from +z in degrees, so small phi points
up. Voxels that share (itheta, iphi) lie on one sensor ray; occlusion
reasoning happens per ray along increasing radius.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import DataError, OriginPoint
from .geometry import Point, PointCloud


@dataclass(frozen=True)
class GridConfig:
    """Bin counts and angular/radial extents of the grid.

    Defaults cover a 32-beam spinning sensor: 512 x 512 x 32 bins over
    [0, 50] m radius, full azimuth, polar angle 79.3 to 121 degrees.
    """

    n_r: int = 512
    n_theta: int = 512
    n_phi: int = 32
    r_max: float = 50.0
    phi_min: float = 79.3
    phi_max: float = 121.0

    def __post_init__(self):
        if min(self.n_r, self.n_theta, self.n_phi) < 1:
            raise ValueError("bin counts must be positive")
        if not (self.r_max > 0.0):
            raise ValueError("r_max must be positive")
        if not (0.0 <= self.phi_min < self.phi_max <= 180.0):
            raise ValueError("need 0 <= phi_min < phi_max <= 180")

    @property
    def dr(self) -> float:
        return self.r_max / self.n_r

    @property
    def dtheta(self) -> float:
        return 360.0 / self.n_theta

    @property
    def dphi(self) -> float:
        return (self.phi_max - self.phi_min) / self.n_phi

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.n_r, self.n_theta, self.n_phi)

    @property
    def n_rays(self) -> int:
        return self.n_theta * self.n_phi


DEFAULT_GRID = GridConfig()


class SphericalCoord(NamedTuple):
    r: float
    theta_deg: float
    phi_deg: float


class VoxelIndex(NamedTuple):
    ir: int
    itheta: int
    iphi: int


# A voxel mask is a plain boolean array of shape GridConfig.shape.
VoxelMask = np.ndarray


def new_mask(cfg: GridConfig) -> VoxelMask:
    return np.zeros(cfg.shape, dtype=bool)


def spherical_coords(xyz: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized cartesian-to-spherical: (r, theta deg in [0,360), phi deg).

    Points at the exact origin get r=0 and undefined angles reported as 0.
    """
    xyz = np.asarray(xyz, dtype=np.float64)
    r = np.linalg.norm(xyz, axis=-1)
    theta = np.degrees(np.arctan2(xyz[..., 1], xyz[..., 0])) % 360.0
    # atan2(+0,-0) gives pi whose degrees % 360 can land on 360.0 exactly;
    # fold it back into range.
    theta = np.where(theta >= 360.0, 0.0, theta)
    with np.errstate(invalid="ignore"):
        cos_phi = np.where(r > 0.0, xyz[..., 2] / np.where(r > 0.0, r, 1.0), 1.0)
    phi = np.degrees(np.arccos(np.clip(cos_phi, -1.0, 1.0)))
    phi = np.where(r > 0.0, phi, 0.0)
    return r, theta, phi


def to_spherical(point: Point | np.ndarray) -> SphericalCoord:
    """Spherical coordinates of one point; raises OriginPoint at r=0."""
    xyz = point.xyz if isinstance(point, Point) else np.asarray(point, dtype=np.float64)
    r, theta, phi = spherical_coords(xyz.reshape(1, 3))
    if r[0] == 0.0:
        raise OriginPoint("the origin has no direction")
    return SphericalCoord(float(r[0]), float(theta[0]), float(phi[0]))


def spherical_to_xyz(r, theta_deg, phi_deg) -> np.ndarray:
    th = np.radians(np.asarray(theta_deg, dtype=np.float64))
    ph = np.radians(np.asarray(phi_deg, dtype=np.float64))
    sin_ph = np.sin(ph)
    r = np.asarray(r, dtype=np.float64)
    return np.stack([r * sin_ph * np.cos(th), r * sin_ph * np.sin(th), r * np.cos(ph)],
                    axis=-1)


def bin_spherical(r: np.ndarray, theta: np.ndarray, phi: np.ndarray,
                  cfg: GridConfig = DEFAULT_GRID) -> tuple[np.ndarray, np.ndarray]:
    """Bin spherical coordinates; returns ((N,3) indices, (N,) in-range flags).

    Indices are only meaningful where the flag is True. Bins are half
    open, so r == r_max or phi == phi_max fall outside while r == 0
    lands in the first radial bin. Azimuth wraps modulo 360. Note that
    cartesian entry points (bin_points, voxelize) report the exact
    origin as (r 0, theta 0, phi 0), which the default grid drops.
    """
    r = np.asarray(r, dtype=np.float64)
    theta = np.asarray(theta, dtype=np.float64)
    phi = np.asarray(phi, dtype=np.float64)
    ok = (r >= 0.0) & (r < cfg.r_max) & (phi >= cfg.phi_min) & (phi < cfg.phi_max)
    ir = np.floor(r / cfg.dr).astype(np.int64)
    it = np.floor((theta % 360.0) / cfg.dtheta).astype(np.int64) % cfg.n_theta
    ip = np.floor((phi - cfg.phi_min) / cfg.dphi).astype(np.int64)
    # Guard the upper edges against float rounding for in-range inputs.
    np.clip(ir, 0, cfg.n_r - 1, out=ir)
    np.clip(ip, 0, cfg.n_phi - 1, out=ip)
    return np.stack([ir, it, ip], axis=-1), ok


def bin_points(xyz: np.ndarray, cfg: GridConfig = DEFAULT_GRID) -> tuple[np.ndarray, np.ndarray]:
    """Bin cartesian points; same contract as bin_spherical."""
    r, theta, phi = spherical_coords(xyz)
    return bin_spherical(r, theta, phi, cfg)


def voxel_of(coord: SphericalCoord, cfg: GridConfig = DEFAULT_GRID) -> VoxelIndex | None:
    """Voxel holding one spherical coordinate, or None when out of range."""
    idx, ok = bin_spherical(np.array([coord[0]]), np.array([coord[1]]),
                            np.array([coord[2]]), cfg)
    if not ok[0]:
        return None
    return VoxelIndex(int(idx[0, 0]), int(idx[0, 1]), int(idx[0, 2]))


def voxel_center_spherical(v, cfg: GridConfig = DEFAULT_GRID) -> SphericalCoord:
    ir, it, ip = v
    return SphericalCoord((ir + 0.5) * cfg.dr, (it + 0.5) * cfg.dtheta,
                          cfg.phi_min + (ip + 0.5) * cfg.dphi)


def voxel_center(v, cfg: GridConfig = DEFAULT_GRID) -> np.ndarray:
    """Cartesian center of a voxel (midpoint in all three spherical axes)."""
    r, th, ph = voxel_center_spherical(v, cfg)
    return spherical_to_xyz(r, th, ph)


def voxel_centers(indices: np.ndarray, cfg: GridConfig = DEFAULT_GRID) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.float64).reshape(-1, 3)
    r = (idx[:, 0] + 0.5) * cfg.dr
    th = (idx[:, 1] + 0.5) * cfg.dtheta
    ph = cfg.phi_min + (idx[:, 2] + 0.5) * cfg.dphi
    return spherical_to_xyz(r, th, ph)


@dataclass(frozen=True)
class OccupancyGrid:
    """Boolean occupancy over a GridConfig, with optional point lists.

    point_lists maps occupied VoxelIndex -> int array of indices into
    the source cloud; it is None unless requested at voxelize time (and
    after operations that change occupancy without tracking points).
    n_dropped counts source points that fell outside the grid.
    """

    config: GridConfig
    occupied: np.ndarray
    point_lists: dict[VoxelIndex, np.ndarray] | None = None
    n_dropped: int = 0

    def __post_init__(self):
        occ = np.ascontiguousarray(self.occupied, dtype=bool)
        if occ.shape != self.config.shape:
            raise ValueError(f"occupancy shape {occ.shape} != grid {self.config.shape}")
        occ = occ.copy()
        occ.setflags(write=False)
        object.__setattr__(self, "occupied", occ)

    @property
    def n_occupied(self) -> int:
        return int(self.occupied.sum())


def voxelize(cloud: PointCloud, cfg: GridConfig = DEFAULT_GRID,
             with_point_lists: bool = False) -> OccupancyGrid:
    """Occupancy grid of a cloud; out-of-range points are dropped and counted."""
    idx, ok = bin_points(cloud.xyz, cfg)
    sel = idx[ok]
    occ = np.zeros(cfg.shape, dtype=bool)
    occ[sel[:, 0], sel[:, 1], sel[:, 2]] = True
    point_lists = None
    if with_point_lists:
        point_lists = {}
        src = np.flatnonzero(ok)
        if len(sel):
            order = np.lexsort((sel[:, 2], sel[:, 1], sel[:, 0]))
            ssel, ssrc = sel[order], src[order]
            change = np.any(np.diff(ssel, axis=0) != 0, axis=1)
            starts = np.concatenate(([0], np.flatnonzero(change) + 1, [len(ssel)]))
            for a, b in zip(starts[:-1], starts[1:]):
                point_lists[VoxelIndex(*ssel[a].tolist())] = ssrc[a:b].copy()
    return OccupancyGrid(cfg, occ, point_lists, int(len(ok) - int(ok.sum())))


def resample(grid: OccupancyGrid) -> PointCloud:
    """One point at the center of every occupied voxel.

    Points come out ordered by (ir, itheta, iphi). Intensity is 0 and
    ring is absent; both are unknowable from occupancy alone.
    """
    idx = np.argwhere(grid.occupied)
    xyz = voxel_centers(idx, grid.config)
    n = len(idx)
    return PointCloud(xyz, np.zeros(n), np.full(n, -1, dtype=np.int32))


def _first_occupied(volume: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-ray (any-occupied flags, index of nearest occupied voxel)."""
    any_ray = volume.any(axis=0)
    first = volume.argmax(axis=0)
    return any_ray, first


def occlusion_mask(grid: OccupancyGrid) -> VoxelMask:
    """Voxels strictly behind the first occupied voxel of their ray."""
    any_ray, first = _first_occupied(grid.occupied)
    radial = np.arange(grid.config.n_r).reshape(-1, 1, 1)
    return any_ray[None, :, :] & (radial > first[None, :, :])


def resolve_occlusion(grid: OccupancyGrid) -> OccupancyGrid:
    """Keep only the nearest occupied voxel on every ray.

    Point lists do not survive: resolution is an occupancy-level edit.
    """
    occ = grid.occupied & ~occlusion_mask(grid)
    return OccupancyGrid(grid.config, occ, None, grid.n_dropped)


def _as_index_array(voxels) -> np.ndarray:
    if isinstance(voxels, np.ndarray):
        return voxels.reshape(-1, 3).astype(np.int64)
    return np.array([tuple(v) for v in voxels], dtype=np.int64).reshape(-1, 3)


def deocclusion_mask(cfg: GridConfig, object_voxels) -> VoxelMask:
    """Voxels a set of object voxels could shadow, object voxels included.

    On every ray touched by the object, the mask covers the object's
    nearest voxel and everything behind it. Scene occupancy plays no
    part; the mask depends only on the object voxels and the grid shape.
    """
    idx = _as_index_array(object_voxels)
    vol = np.zeros(cfg.shape, dtype=bool)
    if len(idx):
        if (idx < 0).any() or (idx >= np.array(cfg.shape)).any():
            raise ValueError("object voxel index out of grid bounds")
        vol[idx[:, 0], idx[:, 1], idx[:, 2]] = True
    any_ray, first = _first_occupied(vol)
    radial = np.arange(cfg.n_r).reshape(-1, 1, 1)
    return any_ray[None, :, :] & (radial >= first[None, :, :])


GRID_RLE_MAGIC = "spherical-grid-rle 1"


def write_grid_rle(volume: np.ndarray, cfg: GridConfig) -> str:
    """Serialize a boolean volume as run lengths in C order.

    Line 1 is a magic/version token, line 2 the grid config, line 3 the
    run lengths starting with a (possibly zero) run of empty voxels.
    """
    flat = np.ascontiguousarray(volume, dtype=bool).ravel()
    cfg_line = " ".join(_fmt_cfg(v) for v in
                        (cfg.n_r, cfg.n_theta, cfg.n_phi, cfg.r_max, cfg.phi_min, cfg.phi_max))
    if flat.size == 0:
        return f"{GRID_RLE_MAGIC}\n{cfg_line}\n\n"
    change = np.flatnonzero(np.diff(flat.view(np.int8)))
    bounds = np.concatenate(([0], change + 1, [flat.size]))
    runs = np.diff(bounds).tolist()
    if flat[0]:
        runs = [0] + runs
    return f"{GRID_RLE_MAGIC}\n{cfg_line}\n" + " ".join(str(r) for r in runs) + "\n"


def _fmt_cfg(v) -> str:
    return str(v) if isinstance(v, int) else format(float(v), ".9g")


def read_grid_rle(text: str) -> tuple[np.ndarray, GridConfig]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != GRID_RLE_MAGIC:
        raise DataError("not a grid run-length file")
    if len(lines) < 2:
        raise DataError("grid run-length file is truncated")
    parts = lines[1].split()
    if len(parts) != 6:
        raise DataError("grid config line must have 6 fields")
    try:
        cfg = GridConfig(int(parts[0]), int(parts[1]), int(parts[2]),
                         float(parts[3]), float(parts[4]), float(parts[5]))
        runs = [int(t) for t in " ".join(lines[2:]).split()]
    except ValueError as e:
        raise DataError(f"bad grid run-length file: {e}") from None
    total = cfg.n_r * cfg.n_theta * cfg.n_phi
    if sum(runs) != total:
        raise DataError(f"run lengths sum to {sum(runs)}, grid holds {total} voxels")
    flat = np.zeros(total, dtype=bool)
    pos, value = 0, False
    for run in runs:
        if run < 0:
            raise DataError("negative run length")
        if value:
            flat[pos:pos + run] = True
        pos += run
        value = not value
    return flat.reshape(cfg.shape), cfg
