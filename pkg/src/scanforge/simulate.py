"""Analytic scene raycaster used as a geometric test oracle.

Scenes are a gently sloped ground plane z = a*x + b*y + c, optional
upright cuboids and optional infinite vertical walls. One ray is cast
from the origin through the center of every (itheta, iphi) grid bin, so
simulated scans are grid-aligned by construction: each hit lands in the
angular bin of its ray.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .geometry import BoundingBox, PointCloud
from .grid import DEFAULT_GRID, GridConfig, spherical_to_xyz
from .scanio import format_box_line, parse_box_line

MAX_GRADE_DEG = 10.0
_EPS = 1e-9

# Label ids stamped on simulated hits, by surface category.
DEFAULT_SCENE_LABELS = {"ground": 24, "wall": 28, "car": 17}
DEFAULT_OBJECT_LABEL = 17

# hit_surface codes: k >= 0 is scene object k, SURFACE_MISS no hit,
# SURFACE_GROUND the plane, SURFACE_WALL - j wall j.
SURFACE_MISS = -1
SURFACE_GROUND = -2
SURFACE_WALL = -3


@dataclass(frozen=True)
class VerticalWall:
    """Infinite vertical plane: points where (x, y) . n = distance."""

    normal_angle: float
    distance: float
    category: str = "wall"

    def __post_init__(self):
        if self.distance <= 0.0:
            raise ValueError("wall distance must be positive")


@dataclass(frozen=True)
class AnalyticScene:
    """Ground plane coefficients (a, b, c) plus cuboids and walls."""

    ground: tuple[float, float, float]
    objects: tuple[tuple[BoundingBox, str], ...] = ()
    walls: tuple[VerticalWall, ...] = ()

    def __post_init__(self):
        a, b, c = (float(v) for v in self.ground)
        limit = math.tan(math.radians(MAX_GRADE_DEG))
        if abs(a) >= limit or abs(b) >= limit:
            raise ValueError(f"ground slope must stay under {MAX_GRADE_DEG} degrees")
        object.__setattr__(self, "ground", (a, b, c))
        object.__setattr__(self, "objects", tuple(self.objects))
        object.__setattr__(self, "walls", tuple(self.walls))
        for box, _ in self.objects:
            cx, cy, cz = box.center
            bottom = cz - box.size[2] / 2.0
            if bottom < a * cx + b * cy + c - 0.25:
                raise ValueError("cuboid sits below the ground plane")

    def ground_z(self, x: float, y: float) -> float:
        a, b, c = self.ground
        return a * x + b * y + c


@dataclass(frozen=True)
class RaycastScan:
    """A simulated scan plus per-ray range and surface id arrays."""

    cloud: PointCloud
    hit_range: np.ndarray
    hit_surface: np.ndarray
    config: GridConfig = field(default=DEFAULT_GRID)


def ray_directions(cfg: GridConfig = DEFAULT_GRID) -> np.ndarray:
    """Unit directions through all angular bin centers, shape (n_theta, n_phi, 3)."""
    it, ip = np.meshgrid(np.arange(cfg.n_theta), np.arange(cfg.n_phi), indexing="ij")
    theta = (it + 0.5) * cfg.dtheta
    phi = cfg.phi_min + (ip + 0.5) * cfg.dphi
    return spherical_to_xyz(1.0, theta, phi)


def ray_box_intersection(dirs: np.ndarray, box: BoundingBox) -> np.ndarray:
    """Entry distance of origin rays into a box; inf where the ray misses.

    Slab test in the box frame. Rays starting inside the box count as
    misses: a sensor buried in an object sees nothing of it.
    """
    d = np.asarray(dirs, dtype=np.float64).reshape(-1, 3)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    # Origin and directions expressed in the box frame.
    ox, oy = box.center[0], box.center[1]
    o = np.array([-(c * ox + s * oy), -(-s * ox + c * oy), -box.center[2]])
    dd = np.empty_like(d)
    dd[:, 0] = c * d[:, 0] + s * d[:, 1]
    dd[:, 1] = -s * d[:, 0] + c * d[:, 1]
    dd[:, 2] = d[:, 2]
    half = np.asarray(box.size) / 2.0
    t_near = np.full(d.shape[0], -np.inf)
    t_far = np.full(d.shape[0], np.inf)
    alive = np.ones(d.shape[0], dtype=bool)
    for axis in range(3):
        da, oa = dd[:, axis], o[axis]
        parallel = np.abs(da) < _EPS
        alive &= ~(parallel & (np.abs(oa) > half[axis]))
        with np.errstate(divide="ignore", invalid="ignore"):
            t0 = (-half[axis] - oa) / da
            t1 = (half[axis] - oa) / da
        lo, hi = np.minimum(t0, t1), np.maximum(t0, t1)
        use = ~parallel
        t_near = np.where(use, np.maximum(t_near, lo), t_near)
        t_far = np.where(use, np.minimum(t_far, hi), t_far)
    hit = alive & (t_near <= t_far) & (t_near > _EPS)
    return np.where(hit, t_near, np.inf).reshape(np.asarray(dirs).shape[:-1])


def _plane_hits(dirs: np.ndarray, ground: tuple[float, float, float]) -> np.ndarray:
    a, b, c = ground
    denom = dirs[:, 2] - a * dirs[:, 0] - b * dirs[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = c / denom
    ok = (np.abs(denom) > _EPS) & (t > _EPS)
    return np.where(ok, t, np.inf)


def _wall_hits(dirs: np.ndarray, wall: VerticalWall) -> np.ndarray:
    nx, ny = math.cos(wall.normal_angle), math.sin(wall.normal_angle)
    denom = dirs[:, 0] * nx + dirs[:, 1] * ny
    with np.errstate(divide="ignore", invalid="ignore"):
        t = wall.distance / denom
    ok = (np.abs(denom) > _EPS) & (t > _EPS)
    return np.where(ok, t, np.inf)


def raycast_scan(scene: AnalyticScene, cfg: GridConfig = DEFAULT_GRID,
                 label_map=None, noise_sigma: float = 0.0,
                 rng: np.random.Generator | None = None) -> RaycastScan:
    """Cast one ray per angular bin and keep the nearest surface under r_max.

    Points carry the label of the surface category they hit and a ring
    equal to their iphi row. noise_sigma > 0 adds Gaussian range noise
    (draws consumed in flat ray order, misses included).
    """
    if label_map is None:
        label_map = DEFAULT_SCENE_LABELS
    dirs = ray_directions(cfg).reshape(-1, 3)
    n = dirs.shape[0]
    t_cols = [_plane_hits(dirs, scene.ground)]
    codes = [SURFACE_GROUND]
    for k, (box, _) in enumerate(scene.objects):
        t_cols.append(ray_box_intersection(dirs, box).ravel())
        codes.append(k)
    for j, wall in enumerate(scene.walls):
        t_cols.append(_wall_hits(dirs, wall))
        codes.append(SURFACE_WALL - j)
    t_all = np.stack(t_cols, axis=1)
    best = np.argmin(t_all, axis=1)
    t_best = t_all[np.arange(n), best]
    if noise_sigma > 0.0:
        if rng is None:
            rng = np.random.default_rng(0)
        t_best = t_best + noise_sigma * rng.standard_normal(n)
        t_best = np.maximum(t_best, _EPS)
    hit = np.isfinite(t_best) & (t_best < cfg.r_max)
    surface = np.where(hit, np.asarray(codes)[best], SURFACE_MISS).astype(np.int32)
    xyz = dirs[hit] * t_best[hit, None]
    iphi = (np.arange(n) % cfg.n_phi)[hit].astype(np.int32)
    labels = np.empty(hit.sum(), dtype=np.uint8)
    surf_hit = surface.ravel()[hit]
    labels[surf_hit == SURFACE_GROUND] = label_map.get("ground", 24)
    labels[surf_hit <= SURFACE_WALL] = label_map.get("wall", 28)
    for k, (_, category) in enumerate(scene.objects):
        labels[surf_hit == k] = label_map.get(category, DEFAULT_OBJECT_LABEL)
    cloud = PointCloud(xyz, np.zeros(hit.sum()), iphi, labels)
    shape = (cfg.n_theta, cfg.n_phi)
    return RaycastScan(cloud, np.where(hit, t_best, np.inf).reshape(shape),
                       surface.reshape(shape), cfg)


def paired_scans(scene: AnalyticScene, object_index: int,
                 cfg: GridConfig = DEFAULT_GRID, label_map=None
                 ) -> tuple[RaycastScan, RaycastScan, PointCloud]:
    """Scan with object, scan without it, and the background it was hiding.

    The revealed cloud holds exactly the without-scan points on rays
    the object's presence changed: ground truth for inpainting.
    """
    if not (0 <= object_index < len(scene.objects)):
        raise IndexError("object_index out of range")
    without_objs = tuple(o for k, o in enumerate(scene.objects) if k != object_index)
    scene_without = AnalyticScene(scene.ground, without_objs, scene.walls)
    with_scan = raycast_scan(scene, cfg, label_map)
    without_scan = raycast_scan(scene_without, cfg, label_map)
    changed = (with_scan.hit_range != without_scan.hit_range)
    # Map each without-scan point to its ray to pick the revealed ones.
    hit = np.isfinite(without_scan.hit_range.ravel())
    revealed = without_scan.cloud.select(changed.ravel()[hit])
    return with_scan, without_scan, revealed


def box_surface_points(size: tuple[float, float, float], spacing: float = 0.05
                       ) -> np.ndarray:
    """Grid of points on a canonical cuboid surface, centered at the origin.

    Used to fabricate dense library objects whose true shape is known.
    """
    l, w, h = size
    hx, hy, hz = l / 2.0, w / 2.0, h / 2.0
    xs = np.linspace(-hx, hx, max(2, int(round(l / spacing)) + 1))
    ys = np.linspace(-hy, hy, max(2, int(round(w / spacing)) + 1))
    zs = np.linspace(-hz, hz, max(2, int(round(h / spacing)) + 1))
    faces = []
    gy, gz = np.meshgrid(ys, zs, indexing="ij")
    for x0 in (-hx, hx):
        faces.append(np.stack([np.full(gy.size, x0), gy.ravel(), gz.ravel()], axis=1))
    gx, gz = np.meshgrid(xs, zs, indexing="ij")
    for y0 in (-hy, hy):
        faces.append(np.stack([gx.ravel(), np.full(gx.size, y0), gz.ravel()], axis=1))
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    for z0 in (-hz, hz):
        faces.append(np.stack([gx.ravel(), gy.ravel(), np.full(gx.size, z0)], axis=1))
    pts = np.concatenate(faces)
    return np.unique(pts, axis=0)


def parse_scene(text: str) -> AnalyticScene:
    """Scene text: a ``ground a b c`` line, box lines, ``wall angle dist`` lines."""
    ground = None
    objects: list[tuple[BoundingBox, str]] = []
    walls: list[VerticalWall] = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        try:
            if parts[0] == "ground":
                if len(parts) != 4:
                    raise ValueError("ground takes 3 coefficients")
                ground = (float(parts[1]), float(parts[2]), float(parts[3]))
            elif parts[0] == "wall":
                if len(parts) != 3:
                    raise ValueError("wall takes normal angle and distance")
                walls.append(VerticalWall(float(parts[1]), float(parts[2])))
            else:
                objects.append(parse_box_line(line, lineno))
        except ValueError as e:
            raise DataError(f"scene line {lineno}: {e}") from None
    if ground is None:
        raise DataError("scene has no ground line")
    try:
        return AnalyticScene(ground, tuple(objects), tuple(walls))
    except ValueError as e:
        raise DataError(str(e)) from None


def format_scene(scene: AnalyticScene) -> str:
    a, b, c = scene.ground
    lines = [f"ground {a:.9g} {b:.9g} {c:.9g}"]
    lines += [format_box_line(box, cat) for box, cat in scene.objects]
    lines += [f"wall {w.normal_angle:.9g} {w.distance:.9g}" for w in scene.walls]
    return "\n".join(lines) + "\n"
