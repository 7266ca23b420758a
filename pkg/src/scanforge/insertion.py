"""Object insertion and whole-scene edit plans.

Inserting an object proceeds in three moves: settle it onto the ground
at the requested pose, resample it onto the spherical grid (one point
per occupied voxel center), and re-resolve occlusion on the rays it
touches so nearer geometry wins. Rays the object never crosses keep
their original points untouched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .errors import (EditStepError, NoGroundPoints, ObjectOutOfGrid,
                     PipelineError, ScanForgeError)
from .geometry import (DEFAULT_CATEGORY_LABELS, DEFAULT_CLASS_SETS, RESERVED_LABEL,
                       BoundingBox, PointCloud, Pose2_5D, SemanticClassSets,
                       concat_clouds, yaw_matrix)
from .grid import DEFAULT_GRID, GridConfig, bin_points, voxel_centers
from .library import LibraryObject, ObjectLibrary, ground_bev_map, perturb_pose, sample_object
from .removal import DEFAULT_BOX_MARGIN, INPAINTERS, Inpainter, remove_object
from .scanio import ScanBundle

PROV_ORIGINAL = 0
PROV_INPAINTED = 1
PROV_INSERTED = 2


def _nearest_ground(cloud: PointCloud, x: float, y: float,
                    class_sets: SemanticClassSets,
                    extra_candidates: np.ndarray | None = None) -> tuple[float, float]:
    """(z, planar distance) of the nearest ground candidate to (x, y)."""
    if cloud.labels is None:
        raise NoGroundPoints("scan carries no semantic labels")
    sel = np.isin(cloud.labels, sorted(class_sets.ground_ids))
    if extra_candidates is not None:
        sel |= extra_candidates
    if not sel.any():
        raise NoGroundPoints("scan has no ground-labeled points")
    pts = cloud.xyz[sel]
    d2 = (pts[:, 0] - x) ** 2 + (pts[:, 1] - y) ** 2
    # argmin takes the first minimum, which is the smallest point index.
    k = int(np.argmin(d2))
    return float(pts[k, 2]), float(math.sqrt(d2[k]))


def ground_height_at(cloud: PointCloud, x: float, y: float,
                     class_sets: SemanticClassSets = DEFAULT_CLASS_SETS,
                     extra_candidates: np.ndarray | None = None) -> float:
    """z of the ground point nearest (x, y) in the x-y plane.

    Ties go to the earlier point. extra_candidates widens the candidate
    set beyond ground_ids (used to opt inpainted points in).
    """
    z, _ = _nearest_ground(cloud, x, y, class_sets, extra_candidates)
    return z


def place_object(obj: LibraryObject, pose: Pose2_5D, scene: PointCloud,
                 class_sets: SemanticClassSets = DEFAULT_CLASS_SETS,
                 extra_ground_candidates: np.ndarray | None = None
                 ) -> tuple[PointCloud, BoundingBox]:
    """Pose a library object with its lowest point set onto the ground.

    The z shift uses the same arithmetic as ground_height_at, so the
    placed minimum equals the ground height bit for bit. The returned
    box bottom sits at ground height (center z = ground + h/2).
    """
    cloud, box, _ = _place_object_detail(obj, pose, scene, class_sets,
                                         extra_ground_candidates)
    return cloud, box


def _place_object_detail(obj: LibraryObject, pose: Pose2_5D, scene: PointCloud,
                         class_sets: SemanticClassSets,
                         extra_ground_candidates: np.ndarray | None
                         ) -> tuple[PointCloud, BoundingBox, float]:
    ground_z, ground_dist = _nearest_ground(scene, pose.x, pose.y, class_sets,
                                            extra_ground_candidates)
    rot = obj.cloud.xyz @ yaw_matrix(pose.yaw).T
    xyz = np.empty_like(rot)
    xyz[:, 0] = rot[:, 0] + pose.x
    xyz[:, 1] = rot[:, 1] + pose.y
    xyz[:, 2] = (rot[:, 2] - rot[:, 2].min()) + ground_z
    posed = PointCloud(xyz, obj.cloud.intensity, obj.cloud.ring, obj.cloud.labels)
    box = BoundingBox((pose.x, pose.y, ground_z + obj.dims[2] / 2.0), obj.dims, pose.yaw)
    return posed, box, ground_dist


def _insert_detail(scene: PointCloud, posed: PointCloud, cfg: GridConfig,
                   object_label: int | None) -> tuple[np.ndarray, PointCloud]:
    """(keep mask over scene points, resampled object cloud)."""
    if len(posed) == 0:
        raise ObjectOutOfGrid("posed object cloud is empty")
    oidx, ook = bin_points(posed.xyz, cfg)
    osel = oidx[ook]
    if len(osel) == 0:
        raise ObjectOutOfGrid("no object point falls inside the grid range")
    obj_occ = np.zeros(cfg.shape, dtype=bool)
    obj_occ[osel[:, 0], osel[:, 1], osel[:, 2]] = True

    sidx, sok = bin_points(scene.xyz, cfg)
    merged = obj_occ.copy()
    ssel = sidx[sok]
    merged[ssel[:, 0], ssel[:, 1], ssel[:, 2]] = True

    edited_ray = obj_occ.any(axis=0)
    first = merged.argmax(axis=0)

    # Scene points survive unless they sit on an edited ray behind the
    # nearest occupied voxel. Out-of-range points are never touched.
    keep = np.ones(len(scene), dtype=bool)
    it, ip = sidx[sok, 1], sidx[sok, 2]
    on_edited = edited_ray[it, ip]
    keep[sok] = ~on_edited | (sidx[sok, 0] == first[it, ip])

    vidx = np.argwhere(obj_occ)
    vkeep = vidx[:, 0] == first[vidx[:, 1], vidx[:, 2]]
    centers = voxel_centers(vidx[vkeep], cfg)
    n_new = len(centers)
    labels = None
    if scene.labels is not None:
        fill = RESERVED_LABEL if object_label is None else object_label
        labels = np.full(n_new, fill, dtype=np.uint8)
    resampled = PointCloud(centers, np.zeros(n_new),
                           np.full(n_new, -1, dtype=np.int32), labels)
    return keep, resampled


def insert_object(scene: PointCloud, posed: PointCloud,
                  cfg: GridConfig = DEFAULT_GRID,
                  object_label: int | None = None) -> PointCloud:
    """Merge a posed object into a scene with per-ray occlusion resolved.

    Output order: surviving scene points first (original order), then
    the resampled object points by ascending voxel index. Resampled
    points sit exactly at voxel centers with intensity 0 and no ring;
    they take object_label when the scene carries labels.
    """
    keep, resampled = _insert_detail(scene, posed, cfg, object_label)
    return concat_clouds([scene.select(keep), resampled])


@dataclass(frozen=True)
class RemovalSpec:
    """Remove one annotated box by index, or every box of a category."""

    box_index: int | None = None
    category: str | None = None

    def __post_init__(self):
        if (self.box_index is None) == (self.category is None):
            raise ValueError("specify exactly one of box_index or category")


@dataclass(frozen=True)
class InsertionSpec:
    """Insert a library object (by id, or sampled from a category).

    The pose is either explicit, or "where removal k happened" via
    at_removed (an index into the plan's removal list, in execution
    order), optionally perturbed within the given bounds.
    """

    object_id: str | None = None
    category: str | None = None
    pose: Pose2_5D | None = None
    at_removed: int | None = None
    perturb_trans: float | None = None
    perturb_yaw: float | None = None

    def __post_init__(self):
        if (self.object_id is None) == (self.category is None):
            raise ValueError("specify exactly one of object_id or category")
        if (self.pose is None) == (self.at_removed is None):
            raise ValueError("specify exactly one of pose or at_removed")
        if (self.perturb_trans is None) != (self.perturb_yaw is None):
            raise ValueError("perturb bounds come as a pair")
        if self.perturb_trans is not None and self.pose is not None:
            raise ValueError("perturbation applies to at_removed poses")


@dataclass(frozen=True)
class EditPlan:
    """Removals then insertions, executed in order under one seed."""

    removals: tuple[RemovalSpec, ...] = ()
    insertions: tuple[InsertionSpec, ...] = ()
    seed: int = 0
    inpainter: str = "tiling"

    def __post_init__(self):
        object.__setattr__(self, "removals", tuple(self.removals))
        object.__setattr__(self, "insertions", tuple(self.insertions))
        if self.inpainter not in INPAINTERS:
            raise ValueError(f"unknown inpainter {self.inpainter!r}, "
                             f"choose from {sorted(INPAINTERS)}")


@dataclass(frozen=True)
class EditDiagnostics:
    """Counters and ground-lookup distances from one edit run."""

    points_removed: int = 0
    points_inpainted: int = 0
    points_inserted: int = 0
    ground_distances: tuple[float, ...] = ()


@dataclass(frozen=True)
class EditResult:
    """Edited cloud with per-point provenance and the boxes added.

    provenance holds one tag per output point: 0 original, 1 inpainted,
    2 inserted. removed_boxes lists what the removals deleted, in order.
    """

    cloud: PointCloud
    inserted_boxes: tuple[tuple[BoundingBox, str], ...]
    provenance: np.ndarray
    removed_boxes: tuple[tuple[BoundingBox, str], ...] = ()
    diagnostics: EditDiagnostics = field(default_factory=EditDiagnostics)

    def __post_init__(self):
        prov = np.ascontiguousarray(self.provenance, dtype=np.uint8)
        if prov.shape != (len(self.cloud),):
            raise ValueError("provenance must tag every point")
        prov.setflags(write=False)
        object.__setattr__(self, "provenance", prov)
        object.__setattr__(self, "inserted_boxes", tuple(self.inserted_boxes))
        object.__setattr__(self, "removed_boxes", tuple(self.removed_boxes))


def _resolve_removals(spec: RemovalSpec, remaining: list[tuple[int, BoundingBox, str]]
                      ) -> list[tuple[int, BoundingBox, str]]:
    if spec.box_index is not None:
        hits = [entry for entry in remaining if entry[0] == spec.box_index]
        if not hits:
            raise PipelineError(f"box index {spec.box_index} does not exist "
                                "or was already removed")
        return hits
    hits = [entry for entry in remaining if entry[2] == spec.category]
    if not hits:
        raise PipelineError(f"no remaining boxes of category {spec.category!r}")
    return hits


def edit_scene(bundle: ScanBundle, plan: EditPlan, library: ObjectLibrary | None = None,
               inpainter: Inpainter | None = None, cfg: GridConfig = DEFAULT_GRID, *,
               class_sets: SemanticClassSets = DEFAULT_CLASS_SETS,
               category_labels: Mapping[str, int] = DEFAULT_CATEGORY_LABELS,
               margin: float = DEFAULT_BOX_MARGIN,
               ground_from_inpainted: bool = False) -> EditResult:
    """Run a whole edit plan: removals in order, then insertions.

    One seeded generator drives every random choice in plan order, so
    equal plans on equal inputs give identical results. Failures are
    re-raised with the step that caused them named.
    """
    if inpainter is None:
        inpainter = INPAINTERS[plan.inpainter]
    cloud = bundle.cloud
    prov = np.zeros(len(cloud), dtype=np.uint8)
    rng = np.random.default_rng(plan.seed)
    remaining = [(k, box, cat) for k, (box, cat) in enumerate(bundle.boxes)]
    removed: list[tuple[BoundingBox, str]] = []
    n_removed = n_inpainted = 0

    for step, spec in enumerate(plan.removals):
        what = (f"box {spec.box_index}" if spec.box_index is not None
                else f"category {spec.category!r}")
        try:
            targets = _resolve_removals(spec, remaining)
            for k, box, cat in targets:
                res = remove_object(cloud, box, margin, inpainter, cfg)
                keep = np.ones(len(cloud), dtype=bool)
                keep[res.deleted_indices] = False
                start, stop = res.inpainted_range
                prov = np.concatenate([prov[keep],
                                       np.full(stop - start, PROV_INPAINTED, np.uint8)])
                n_removed += len(res.deleted_indices)
                n_inpainted += stop - start
                cloud = res.cloud
                removed.append((box, cat))
                remaining.remove((k, box, cat))
        except ScanForgeError as e:
            raise EditStepError(f"removal {step} ({what})", e) from e

    inserted: list[tuple[BoundingBox, str]] = []
    n_inserted = 0
    distances: list[float] = []
    for step, spec in enumerate(plan.insertions):
        what = (f"object {spec.object_id!r}" if spec.object_id is not None
                else f"category {spec.category!r}")
        try:
            if library is None:
                raise PipelineError("plan inserts objects but no library was given")
            if spec.object_id is not None:
                try:
                    obj = library.get(spec.object_id)
                except KeyError:
                    raise PipelineError(f"library has no object {spec.object_id!r}")
            else:
                obj = sample_object(library, spec.category, rng)
            if spec.pose is not None:
                pose = spec.pose
            else:
                if not (0 <= spec.at_removed < len(removed)):
                    raise PipelineError(
                        f"at_removed index {spec.at_removed} is out of range "
                        f"({len(removed)} removals ran)")
                box, _ = removed[spec.at_removed]
                pose = Pose2_5D(box.center[0], box.center[1], box.yaw)
            if spec.perturb_trans is not None:
                gmap = ground_bev_map(cloud, class_sets=class_sets)
                pose = perturb_pose(pose, rng, spec.perturb_trans,
                                    spec.perturb_yaw, gmap)
            extra = (prov == PROV_INPAINTED) if ground_from_inpainted else None
            posed, box, dist = _place_object_detail(obj, pose, cloud, class_sets, extra)
            label = category_labels.get(obj.category, RESERVED_LABEL)
            keep, resampled = _insert_detail(cloud, posed, cfg, label)
            cloud = concat_clouds([cloud.select(keep), resampled])
            prov = np.concatenate([prov[keep],
                                   np.full(len(resampled), PROV_INSERTED, np.uint8)])
            inserted.append((box, obj.category))
            n_inserted += len(resampled)
            distances.append(dist)
        except ScanForgeError as e:
            if isinstance(e, EditStepError):
                raise
            raise EditStepError(f"insertion {step} ({what})", e) from e

    diag = EditDiagnostics(n_removed, n_inpainted, n_inserted, tuple(distances))
    return EditResult(cloud, tuple(inserted), prov, tuple(removed), diag)
