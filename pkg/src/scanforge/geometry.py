"""Core value types: points, clouds, boxes, poses, semantic class sets.

All coordinates live in the sensor frame: x forward, y left, z up, sensor
at the origin. Angles are radians here; degrees only appear at the grid
and file-format boundaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

TWO_PI = 2.0 * math.pi

# Default nuScenes-lidarseg ids: drivable surface / other flat / sidewalk /
# terrain for ground, car for vehicles.
DEFAULT_GROUND_IDS = frozenset({24, 25, 26, 27})
DEFAULT_VEHICLE_IDS = frozenset({17})


def normalize_angle(a: float) -> float:
    """Wrap an angle in radians into [-pi, pi)."""
    return (a + math.pi) % TWO_PI - math.pi


def yaw_matrix(yaw: float) -> np.ndarray:
    """Rotation matrix for a counterclockwise yaw about +z."""
    c, s = math.cos(yaw), math.sin(yaw)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


@dataclass(frozen=True)
class Point:
    """A single return: position, intensity, optional ring index."""

    x: float
    y: float
    z: float
    intensity: float = 0.0
    ring: int | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.z)):
            raise ValueError("point coordinates must be finite")
        if not math.isfinite(self.intensity) or self.intensity < 0.0:
            raise ValueError("intensity must be finite and non-negative")
        if self.ring is not None and self.ring < 0:
            raise ValueError("ring index must be non-negative")

    @property
    def xyz(self) -> np.ndarray:
        return np.array([self.x, self.y, self.z])


def _readonly(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PointCloud:
    """Column-oriented point set.

    Attributes:
        xyz: (N, 3) float64 positions.
        intensity: (N,) float64, non-negative.
        ring: (N,) int32 ring indices, -1 where unknown.
        labels: optional (N,) uint8 semantic ids.

    Arrays are defensively copied and frozen; all methods return new
    instances.
    """

    xyz: np.ndarray
    intensity: np.ndarray
    ring: np.ndarray
    labels: np.ndarray | None = None

    def __post_init__(self):
        xyz = np.ascontiguousarray(self.xyz, dtype=np.float64)
        if xyz.ndim != 2 or xyz.shape[1] != 3:
            raise ValueError("xyz must have shape (N, 3)")
        n = xyz.shape[0]
        intensity = np.ascontiguousarray(self.intensity, dtype=np.float64)
        ring = np.ascontiguousarray(self.ring, dtype=np.int32)
        if intensity.shape != (n,) or ring.shape != (n,):
            raise ValueError("intensity and ring must have shape (N,)")
        if not np.isfinite(xyz).all():
            raise ValueError("point coordinates must be finite")
        if not np.isfinite(intensity).all() or (intensity < 0.0).any():
            raise ValueError("intensity must be finite and non-negative")
        if (ring < -1).any():
            raise ValueError("ring must be >= -1 (-1 marks absent)")
        object.__setattr__(self, "xyz", _readonly(xyz.copy()))
        object.__setattr__(self, "intensity", _readonly(intensity.copy()))
        object.__setattr__(self, "ring", _readonly(ring.copy()))
        if self.labels is not None:
            labels = np.ascontiguousarray(self.labels, dtype=np.uint8)
            if labels.shape != (n,):
                raise ValueError("labels must have shape (N,)")
            object.__setattr__(self, "labels", _readonly(labels.copy()))

    def __len__(self) -> int:
        return self.xyz.shape[0]

    @classmethod
    def empty(cls, with_labels: bool = False) -> "PointCloud":
        z = np.zeros((0,))
        return cls(np.zeros((0, 3)), z, z.astype(np.int32),
                   np.zeros(0, dtype=np.uint8) if with_labels else None)

    @classmethod
    def from_points(cls, points: Iterable[Point],
                    labels: Sequence[int] | None = None) -> "PointCloud":
        pts = list(points)
        xyz = np.array([[p.x, p.y, p.z] for p in pts]).reshape(len(pts), 3)
        inten = np.array([p.intensity for p in pts])
        ring = np.array([-1 if p.ring is None else p.ring for p in pts], dtype=np.int32)
        lab = None if labels is None else np.asarray(labels, dtype=np.uint8)
        return cls(xyz, inten, ring, lab)

    def point(self, i: int) -> Point:
        r = int(self.ring[i])
        return Point(float(self.xyz[i, 0]), float(self.xyz[i, 1]), float(self.xyz[i, 2]),
                     float(self.intensity[i]), None if r < 0 else r)

    def select(self, index) -> "PointCloud":
        """Subset by boolean mask or integer index array."""
        return PointCloud(self.xyz[index], self.intensity[index], self.ring[index],
                          None if self.labels is None else self.labels[index])

    def with_labels(self, labels: np.ndarray | None) -> "PointCloud":
        return PointCloud(self.xyz, self.intensity, self.ring, labels)


def concat_clouds(clouds: Sequence[PointCloud], fill_label: int = 0) -> PointCloud:
    """Concatenate clouds in order.

    If any input carries labels the result does too; label-less inputs
    contribute ``fill_label`` for their points.
    """
    if not clouds:
        return PointCloud.empty()
    xyz = np.concatenate([c.xyz for c in clouds])
    inten = np.concatenate([c.intensity for c in clouds])
    ring = np.concatenate([c.ring for c in clouds])
    labels = None
    if any(c.labels is not None for c in clouds):
        labels = np.concatenate([
            c.labels if c.labels is not None
            else np.full(len(c), fill_label, dtype=np.uint8)
            for c in clouds
        ])
    return PointCloud(xyz, inten, ring, labels)


def transform_cloud(cloud: PointCloud, translation: Sequence[float] = (0.0, 0.0, 0.0),
                    yaw: float = 0.0) -> PointCloud:
    """Rigid motion: rotate about +z by yaw, then translate.

    Intensity, ring and labels ride along unchanged.
    """
    xyz = cloud.xyz @ yaw_matrix(yaw).T + np.asarray(translation, dtype=np.float64)
    return PointCloud(xyz, cloud.intensity, cloud.ring, cloud.labels)


@dataclass(frozen=True)
class BoundingBox:
    """Upright box: center, (length, width, height), yaw about +z.

    Length runs along the heading axis. Yaw is normalized to [-pi, pi)
    on construction.
    """

    center: tuple[float, float, float]
    size: tuple[float, float, float]
    yaw: float

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        s = tuple(float(v) for v in self.size)
        if len(c) != 3 or len(s) != 3:
            raise ValueError("center and size must have three components")
        if not all(math.isfinite(v) for v in c + s) or not math.isfinite(self.yaw):
            raise ValueError("box parameters must be finite")
        if any(v <= 0.0 for v in s):
            raise ValueError("box dimensions must be positive")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "size", s)
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))

    @property
    def length(self) -> float:
        return self.size[0]

    @property
    def width(self) -> float:
        return self.size[1]

    @property
    def height(self) -> float:
        return self.size[2]


def points_in_box(box: BoundingBox, xyz: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """Boolean mask of points inside the box inflated by margin per side.

    Membership is closed: points on the inflated faces count as inside.
    """
    rel = np.asarray(xyz, dtype=np.float64) - np.asarray(box.center)
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    # Rotate into the box frame (inverse yaw).
    u = c * rel[:, 0] + s * rel[:, 1]
    v = -s * rel[:, 0] + c * rel[:, 1]
    half = np.asarray(box.size) / 2.0 + margin
    return ((np.abs(u) <= half[0]) & (np.abs(v) <= half[1])
            & (np.abs(rel[:, 2]) <= half[2]))


def box_contains(box: BoundingBox, point: Point | Sequence[float],
                 margin: float = 0.0) -> bool:
    xyz = point.xyz if isinstance(point, Point) else np.asarray(point, dtype=np.float64)
    return bool(points_in_box(box, xyz.reshape(1, 3), margin)[0])


@dataclass(frozen=True)
class Pose2_5D:
    """Ground placement: x, y and heading; z comes from the ground."""

    x: float
    y: float
    yaw: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y) and math.isfinite(self.yaw)):
            raise ValueError("pose parameters must be finite")
        object.__setattr__(self, "yaw", normalize_angle(float(self.yaw)))


@dataclass(frozen=True)
class SemanticClassSets:
    """Which label ids count as ground and which as vehicles."""

    ground_ids: frozenset[int] = field(default=DEFAULT_GROUND_IDS)
    vehicle_ids: frozenset[int] = field(default=DEFAULT_VEHICLE_IDS)

    def __post_init__(self):
        ground = frozenset(int(i) for i in self.ground_ids)
        vehicle = frozenset(int(i) for i in self.vehicle_ids)
        if ground & vehicle:
            raise ValueError("ground and vehicle id sets must be disjoint")
        object.__setattr__(self, "ground_ids", ground)
        object.__setattr__(self, "vehicle_ids", vehicle)


DEFAULT_CLASS_SETS = SemanticClassSets()

# Semantic id written on points created by an edit (inpainted background,
# resampled inserted objects) unless a category map says otherwise.
RESERVED_LABEL = 0

# Label given to inserted points per object category.
DEFAULT_CATEGORY_LABELS: Mapping[str, int] = {"car": 17}
