"""Object library: extract, complete, persist, and sample object clouds.

Objects live in a canonical frame: box center at the origin, heading
along +x. Completion exploits the bilateral symmetry of vehicles by
mirroring across the x-z plane instead of running a learned completer;
any callable with the same shape can replace it.
"""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import DataError, EmptyCategory, TooFewPoints
from .geometry import (DEFAULT_CLASS_SETS, BoundingBox, PointCloud, Pose2_5D,
                       SemanticClassSets, concat_clouds, normalize_angle,
                       points_in_box, transform_cloud)
from .scanio import ScanBundle, read_scan_bin, write_scan_bin

DEFAULT_MIN_POINTS = 10
DEFAULT_EXTRACT_MARGIN = 0.1
MIRROR_DEDUP_M = 1e-3
EXTENT_SLACK_M = 0.1


@dataclass(frozen=True)
class LibraryObject:
    """A canonical-frame object cloud with its dimensions and origin."""

    object_id: str
    category: str
    cloud: PointCloud
    dims: tuple[float, float, float]
    source_scan: str
    completed: bool = False

    def __post_init__(self):
        if not self.object_id or not self.category:
            raise ValueError("object_id and category must be non-empty")
        if len(self.cloud) == 0:
            raise ValueError("library object cloud must be non-empty")
        dims = tuple(float(v) for v in self.dims)
        if len(dims) != 3 or any(v <= 0 for v in dims):
            raise ValueError("dims must be three positive extents")
        object.__setattr__(self, "dims", dims)
        half = np.asarray(dims) / 2.0 + EXTENT_SLACK_M
        if (np.abs(self.cloud.xyz) > half).any():
            raise ValueError("points exceed dims/2 plus slack in the canonical frame")


def extract_object(scan: PointCloud, box: BoundingBox, category: str,
                   object_id: str = "object", source_scan: str = "",
                   *, margin: float = DEFAULT_EXTRACT_MARGIN,
                   min_points: int = DEFAULT_MIN_POINTS,
                   class_sets: SemanticClassSets = DEFAULT_CLASS_SETS) -> LibraryObject:
    """Cut the box contents out of a scan into the canonical frame.

    With labels present, non-vehicle points inside the box (ground
    caught under the object, mostly) are left behind.
    """
    inside = points_in_box(box, scan.xyz, margin)
    if scan.labels is not None:
        inside &= np.isin(scan.labels, sorted(class_sets.vehicle_ids))
    count = int(inside.sum())
    if count < min_points:
        raise TooFewPoints(f"box holds {count} usable points, need {min_points}")
    part = scan.select(inside)
    canonical = transform_cloud(
        transform_cloud(part, translation=-np.asarray(box.center)), yaw=-box.yaw)
    return LibraryObject(object_id, category, canonical.with_labels(None),
                         box.size, source_scan, completed=False)


def mirror_complete(cloud: PointCloud, dedup: float = MIRROR_DEDUP_M) -> PointCloud:
    """Union a canonical cloud with its reflection across the x-z plane.

    Reflected points closer than ``dedup`` to an existing point are
    dropped, so points on the symmetry plane do not double up and the
    operation is idempotent.
    """
    reflected = cloud.xyz * np.array([1.0, -1.0, 1.0])
    dist, _ = cKDTree(cloud.xyz).query(reflected, k=1)
    keep = dist > dedup
    mirrored = PointCloud(reflected[keep], cloud.intensity[keep], cloud.ring[keep],
                          None if cloud.labels is None else cloud.labels[keep])
    return concat_clouds([cloud, mirrored])


def complete_object(obj: LibraryObject, completer=mirror_complete) -> LibraryObject:
    if obj.completed:
        return obj
    return LibraryObject(obj.object_id, obj.category, completer(obj.cloud),
                         obj.dims, obj.source_scan, completed=True)


@dataclass(frozen=True)
class ObjectLibrary:
    """Immutable collection of library objects with unique ids."""

    objects: tuple[LibraryObject, ...]

    def __post_init__(self):
        objs = tuple(sorted(self.objects, key=lambda o: o.object_id))
        ids = [o.object_id for o in objs]
        if len(set(ids)) != len(ids):
            raise ValueError("object ids must be unique")
        object.__setattr__(self, "objects", objs)

    def __len__(self) -> int:
        return len(self.objects)

    def __iter__(self):
        return iter(self.objects)

    def get(self, object_id: str) -> LibraryObject:
        for o in self.objects:
            if o.object_id == object_id:
                return o
        raise KeyError(f"no object with id {object_id!r}")

    def categories(self) -> tuple[str, ...]:
        return tuple(sorted({o.category for o in self.objects}))

    def of_category(self, category: str) -> tuple[LibraryObject, ...]:
        return tuple(o for o in self.objects if o.category == category)


def sample_object(library: ObjectLibrary, category: str,
                  rng: np.random.Generator | int | None = None) -> LibraryObject:
    """Uniform draw from one category, reproducible under a seeded rng."""
    pool = library.of_category(category)
    if not pool:
        raise EmptyCategory(f"library holds no objects of category {category!r}")
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    return pool[int(rng.integers(len(pool)))]


def build_library(bundles, categories=None, *,
                  margin: float = DEFAULT_EXTRACT_MARGIN,
                  min_points: int = DEFAULT_MIN_POINTS,
                  class_sets: SemanticClassSets = DEFAULT_CLASS_SETS,
                  complete: bool = True) -> tuple[ObjectLibrary, int]:
    """Extract every matching box from the bundles into a library.

    Every (scan, box) pair becomes a distinct object: repeated sightings
    of one physical object are not merged. Boxes too sparse to extract
    are skipped; the skip count is returned with the library.
    """
    objects, skipped = [], 0
    for bundle in bundles:
        for k, (box, category) in enumerate(bundle.boxes):
            if categories is not None and category not in categories:
                continue
            object_id = f"{bundle.scan_id}-{k:04d}"
            try:
                obj = extract_object(bundle.cloud, box, category, object_id,
                                     bundle.scan_id, margin=margin,
                                     min_points=min_points, class_sets=class_sets)
            except TooFewPoints:
                skipped += 1
                continue
            objects.append(complete_object(obj) if complete else obj)
    return ObjectLibrary(tuple(objects)), skipped


MANIFEST_NAME = "manifest.tsv"
_MANIFEST_HEADER = "id\tcategory\tlength\twidth\theight\tsource_scan\tcompleted"


def save_library(library: ObjectLibrary, directory: str) -> None:
    """Write manifest.tsv plus one scan-format .bin per object."""
    os.makedirs(directory, exist_ok=True)
    lines = [_MANIFEST_HEADER]
    for o in library.objects:
        l, w, h = (format(v, ".9g") for v in o.dims)
        lines.append(f"{o.object_id}\t{o.category}\t{l}\t{w}\t{h}"
                     f"\t{o.source_scan}\t{int(o.completed)}")
    with open(os.path.join(directory, MANIFEST_NAME), "w") as f:
        f.write("\n".join(lines) + "\n")
    for o in library.objects:
        with open(os.path.join(directory, o.object_id + ".bin"), "wb") as f:
            f.write(write_scan_bin(o.cloud))


def load_library(directory: str) -> ObjectLibrary:
    manifest = os.path.join(directory, MANIFEST_NAME)
    try:
        with open(manifest, "r") as f:
            lines = f.read().splitlines()
    except FileNotFoundError:
        raise DataError(f"no {MANIFEST_NAME} in {directory}") from None
    if not lines or lines[0] != _MANIFEST_HEADER:
        raise DataError("library manifest has an unexpected header")
    objects = []
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 7:
            raise DataError(f"manifest line {lineno}: expected 7 fields")
        object_id, category, l, w, h, source_scan, completed = parts
        with open(os.path.join(directory, object_id + ".bin"), "rb") as f:
            cloud = read_scan_bin(f.read())
        try:
            objects.append(LibraryObject(object_id, category, cloud,
                                         (float(l), float(w), float(h)),
                                         source_scan, completed == "1"))
        except ValueError as e:
            raise DataError(f"manifest line {lineno}: {e}") from None
    return ObjectLibrary(tuple(objects))


@dataclass(frozen=True)
class GroundMap:
    """BEV boolean map of where ground-labeled points were seen.

    Cell (i, j) covers [x_min + i*cell, x_min + (i+1)*cell) and likewise
    in y; queries outside the map are False.
    """

    values: np.ndarray
    x_min: float
    y_min: float
    cell: float

    def contains(self, x: float, y: float) -> bool:
        i = math.floor((x - self.x_min) / self.cell)
        j = math.floor((y - self.y_min) / self.cell)
        if 0 <= i < self.values.shape[0] and 0 <= j < self.values.shape[1]:
            return bool(self.values[i, j])
        return False


def ground_bev_map(cloud: PointCloud, cell: float = 0.5,
                   class_sets: SemanticClassSets = DEFAULT_CLASS_SETS) -> GroundMap:
    """Mark every BEV cell that holds at least one ground-labeled point."""
    if cloud.labels is None:
        return GroundMap(np.zeros((0, 0), dtype=bool), 0.0, 0.0, cell)
    sel = np.isin(cloud.labels, sorted(class_sets.ground_ids))
    if not sel.any():
        return GroundMap(np.zeros((0, 0), dtype=bool), 0.0, 0.0, cell)
    pts = cloud.xyz[sel]
    x_min = float(np.floor(pts[:, 0].min() / cell) * cell)
    y_min = float(np.floor(pts[:, 1].min() / cell) * cell)
    i = np.floor((pts[:, 0] - x_min) / cell).astype(np.int64)
    j = np.floor((pts[:, 1] - y_min) / cell).astype(np.int64)
    values = np.zeros((int(i.max()) + 1, int(j.max()) + 1), dtype=bool)
    values[i, j] = True
    return GroundMap(values, x_min, y_min, cell)


def perturb_pose(pose: Pose2_5D, rng: np.random.Generator | int | None,
                 max_trans: float = 2.5, max_yaw: float = math.radians(45.0),
                 ground_map: GroundMap | None = None,
                 max_attempts: int = 100) -> Pose2_5D:
    """Jitter a pose within bounds, keeping it on mapped ground.

    Draws |dx|, |dy| <= max_trans with planar norm <= max_trans and
    |dyaw| <= max_yaw; a draw landing off the ground map is rejected.
    After max_attempts rejections the pose comes back unperturbed.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    for _ in range(max_attempts):
        dx, dy = rng.uniform(-max_trans, max_trans, size=2)
        dyaw = rng.uniform(-max_yaw, max_yaw)
        if math.hypot(dx, dy) > max_trans:
            continue
        x, y = pose.x + dx, pose.y + dy
        if ground_map is not None and not ground_map.contains(x, y):
            continue
        return Pose2_5D(x, y, normalize_angle(pose.yaw + dyaw))
    return pose
