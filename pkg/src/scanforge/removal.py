"""Object removal: carve out a box, mask what it occluded, inpaint.

Removing an object leaves two kinds of holes: the voxels the object
itself occupied and the voxels it shadowed from the sensor. Both are
captured by a de-occlusion mask; an inpainter then fabricates plausible
background points inside that mask only.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Protocol

import numpy as np

from .errors import (EmptyObject, InsufficientGroundContext, NoDonorSector,
                     NoObjectFreeSector)
from .geometry import (DEFAULT_CLASS_SETS, RESERVED_LABEL, BoundingBox, PointCloud,
                       SemanticClassSets, concat_clouds, points_in_box, yaw_matrix)
from .grid import (DEFAULT_GRID, GridConfig, OccupancyGrid, VoxelMask, bin_points,
                   deocclusion_mask, voxelize)
from .simulate import ray_box_intersection, ray_directions

DEFAULT_BOX_MARGIN = 0.1


class Inpainter(Protocol):
    """Fills masked voxels with new background points.

    Implementations receive the background cloud (object points already
    removed), its occupancy grid, the de-occlusion mask and the grid
    config, and return only new points, every one inside a masked voxel.
    """

    def __call__(self, background: PointCloud, grid: OccupancyGrid,
                 mask: VoxelMask, cfg: GridConfig) -> PointCloud: ...


def object_voxels_of(cloud: PointCloud, box: BoundingBox,
                     margin: float = DEFAULT_BOX_MARGIN,
                     cfg: GridConfig = DEFAULT_GRID) -> np.ndarray:
    """Unique voxel indices holding the cloud's points inside the box.

    Points outside the grid range contribute nothing.
    """
    inside = points_in_box(box, cloud.xyz, margin)
    idx, ok = bin_points(cloud.xyz, cfg)
    sel = idx[inside & ok]
    if len(sel) == 0:
        return np.zeros((0, 3), dtype=np.int64)
    return np.unique(sel, axis=0)


def _mask_columns(mask: VoxelMask) -> np.ndarray:
    return mask.any(axis=(0, 2))


def _longest_false_run_circular(flags: np.ndarray) -> tuple[int, int]:
    """(start, length) of the longest circular run of False entries."""
    n = flags.size
    if not flags.any():
        return 0, n
    if flags.all():
        return 0, 0
    first_true = int(np.argmax(flags))
    rot = ~np.roll(flags, -first_true)
    d = np.diff(rot.astype(np.int8))
    starts = np.flatnonzero(d == 1) + 1
    ends = np.flatnonzero(d == -1) + 1
    if rot[-1]:
        ends = np.concatenate((ends, [n]))
    lens = ends - starts
    k = int(np.argmax(lens))
    return (int(starts[k]) + first_true) % n, int(lens[k])


def _covering_arc(cols: np.ndarray) -> tuple[int, int]:
    """Start and width of the narrowest circular arc containing all True columns."""
    gap_start, gap_len = _longest_false_run_circular(cols)
    return (gap_start + gap_len) % cols.size, cols.size - gap_len


def tiling_inpaint(background: PointCloud, grid: OccupancyGrid, mask: VoxelMask,
                   cfg: GridConfig = DEFAULT_GRID, *,
                   class_sets: SemanticClassSets = DEFAULT_CLASS_SETS,
                   inpaint_label: int = RESERVED_LABEL) -> PointCloud:
    """Copy a clean azimuth sector over the masked one.

    The masked columns are covered by the narrowest azimuth arc; donor
    arcs of the same width are tried at whole-arc offsets, nearer ones
    first and increasing azimuth before decreasing on ties. A donor must
    contain no masked voxels and no points labeled as vehicles. Donor
    points are rotated about +z onto the masked arc and only those that
    land inside masked voxels are kept, with intensity 0, no ring, and
    the inpaint label.
    """
    if mask.shape != cfg.shape:
        raise ValueError("mask shape does not match grid config")
    cols = _mask_columns(mask)
    if not cols.any():
        return PointCloud.empty(with_labels=True)
    if cols.all():
        raise NoDonorSector("the mask covers every azimuth column")
    arc_start, width = _covering_arc(cols)
    n = cols.size
    in_arc = np.zeros(n, dtype=bool)
    in_arc[(arc_start + np.arange(width)) % n] = True

    idx, ok = bin_points(background.xyz, cfg)
    object_cols = np.zeros(n, dtype=bool)
    if background.labels is not None:
        vehicle = np.isin(background.labels, sorted(class_sets.vehicle_ids))
        hit = ok & vehicle
        if hit.any():
            object_cols[np.unique(idx[hit, 1])] = True

    for k in range(1, n // width + 1):
        for shift in (k * width, -k * width):
            donor = np.roll(in_arc, shift)
            if (donor & in_arc).any() or (donor & object_cols).any():
                continue
            donor_sel = ok.copy()
            donor_sel[ok] = donor[idx[ok, 1]]
            pts = background.xyz[donor_sel]
            rot = pts @ yaw_matrix(math.radians(-shift * cfg.dtheta)).T
            ridx, rok = bin_points(rot, cfg)
            keep = rok.copy()
            keep[rok] = mask[ridx[rok, 0], ridx[rok, 1], ridx[rok, 2]]
            new = rot[keep]
            return PointCloud(new, np.zeros(len(new)),
                              np.full(len(new), -1, dtype=np.int32),
                              np.full(len(new), inpaint_label, dtype=np.uint8))
    raise NoDonorSector("no object-free azimuth sector of the needed width")


def ground_extrapolation_inpaint(background: PointCloud, grid: OccupancyGrid,
                                 mask: VoxelMask, cfg: GridConfig = DEFAULT_GRID, *,
                                 class_sets: SemanticClassSets = DEFAULT_CLASS_SETS,
                                 inpaint_label: int = RESERVED_LABEL,
                                 max_planar_range: float = 15.0,
                                 sector_pad_deg: float = 10.0,
                                 min_ground_points: int = 50) -> PointCloud:
    """Extend the local ground plane through the masked rays.

    Fits z = a*x + b*y + c by least squares to ground-labeled points
    within max_planar_range of the sensor in the x-y plane whose azimuth
    falls in the masked arc padded by sector_pad_deg. Each masked ray is
    intersected with the plane and the intersection kept when it lands
    in a masked voxel, so rays that exit above the horizon add nothing.
    """
    if mask.shape != cfg.shape:
        raise ValueError("mask shape does not match grid config")
    if not mask.any():
        return PointCloud.empty(with_labels=True)
    if background.labels is None:
        raise InsufficientGroundContext("scan carries no semantic labels")
    cols = _mask_columns(mask)
    n = cols.size
    if cols.all():
        in_sector = np.ones(n, dtype=bool)
    else:
        arc_start, width = _covering_arc(cols)
        pad = int(math.ceil(sector_pad_deg / cfg.dtheta))
        span = min(n, width + 2 * pad)
        in_sector = np.zeros(n, dtype=bool)
        in_sector[(arc_start - pad + np.arange(span)) % n] = True

    xyz = background.xyz
    theta_col = (np.floor((np.degrees(np.arctan2(xyz[:, 1], xyz[:, 0])) % 360.0)
                          / cfg.dtheta).astype(np.int64) % n)
    ground = np.isin(background.labels, sorted(class_sets.ground_ids))
    planar = np.hypot(xyz[:, 0], xyz[:, 1])
    sel = ground & (planar <= max_planar_range) & in_sector[theta_col]
    count = int(sel.sum())
    if count < min_ground_points:
        raise InsufficientGroundContext(
            f"{count} ground points near the mask, need {min_ground_points}")
    g = xyz[sel]
    design = np.column_stack([g[:, 0], g[:, 1], np.ones(count)])
    (a, b, c), *_ = np.linalg.lstsq(design, g[:, 2], rcond=None)

    rays = mask.any(axis=0)
    dirs = ray_directions(cfg)[rays]
    denom = dirs[:, 2] - a * dirs[:, 0] - b * dirs[:, 1]
    with np.errstate(divide="ignore", invalid="ignore"):
        t = c / denom
    live = (np.abs(denom) > 1e-12) & np.isfinite(t) & (t > 0.0)
    pts = dirs[live] * t[live, None]
    pidx, pok = bin_points(pts, cfg)
    keep = pok.copy()
    keep[pok] = mask[pidx[pok, 0], pidx[pok, 1], pidx[pok, 2]]
    new = pts[keep]
    return PointCloud(new, np.zeros(len(new)), np.full(len(new), -1, dtype=np.int32),
                      np.full(len(new), inpaint_label, dtype=np.uint8))


INPAINTERS: dict[str, Callable] = {
    "tiling": tiling_inpaint,
    "ground": ground_extrapolation_inpaint,
}


@dataclass(frozen=True)
class RemovalResult:
    """Outcome of one removal: edited cloud, mask, bookkeeping.

    deleted_indices index into the input scan; inpainted_range is the
    half-open index range of new points within the output cloud.
    """

    cloud: PointCloud
    mask: VoxelMask
    deleted_indices: np.ndarray
    inpainted_range: tuple[int, int]


def remove_object(scan: PointCloud, box: BoundingBox,
                  margin: float = DEFAULT_BOX_MARGIN,
                  inpainter: Inpainter = tiling_inpaint,
                  cfg: GridConfig = DEFAULT_GRID) -> RemovalResult:
    """Delete the points in a box and inpaint what they hid.

    The de-occlusion mask spans the object's voxels and every voxel
    behind them; new points appear only there. Raises EmptyObject when
    the inflated box holds no points at all.
    """
    inside = points_in_box(box, scan.xyz, margin)
    if not inside.any():
        raise EmptyObject("removal box contains no scan points")
    deleted = np.flatnonzero(inside)
    obj_voxels = object_voxels_of(scan, box, margin, cfg)
    mask = deocclusion_mask(cfg, obj_voxels)
    background = scan.select(~inside)
    bg_grid = voxelize(background, cfg)
    new_points = inpainter(background, bg_grid, mask, cfg)
    cloud = concat_clouds([background, new_points])
    return RemovalResult(cloud, mask, deleted, (len(background), len(cloud)))


def average_box_size(boxes) -> tuple[float, float, float]:
    sizes = np.array([list(b.size) for b, _ in boxes])
    if len(sizes) == 0:
        raise ValueError("no boxes to average")
    l, w, h = sizes.mean(axis=0)
    return float(l), float(w), float(h)


def synth_eval_mask(cloud: PointCloud, box_size: tuple[float, float, float],
                    cfg: GridConfig = DEFAULT_GRID, *,
                    distance: float = 10.0, step_deg: float = 1.0,
                    class_sets: SemanticClassSets = DEFAULT_CLASS_SETS,
                    boxes=(), margin: float = DEFAULT_BOX_MARGIN
                    ) -> tuple[VoxelMask, PointCloud, BoundingBox]:
    """Shadow of a synthetic box placed where it hides no real object.

    A box of the given size is floated at the given distance, heading
    orthogonal to the viewing direction, sweeping azimuth from 0 in
    step_deg increments. The first placement whose shadow contains no
    vehicle-labeled point and no point inside a provided box wins.
    Returns the mask, the real points inside it (held-out ground truth
    for inpainting), and the synthetic box.
    """
    obj = np.zeros(len(cloud), dtype=bool)
    if cloud.labels is not None:
        obj |= np.isin(cloud.labels, sorted(class_sets.vehicle_ids))
    for box, _ in boxes:
        obj |= points_in_box(box, cloud.xyz, margin)
    idx, ok = bin_points(cloud.xyz, cfg)
    dirs = ray_directions(cfg)
    radial = np.arange(cfg.n_r).reshape(-1, 1, 1)

    has_ground = (cloud.labels is not None
                  and np.isin(cloud.labels, sorted(class_sets.ground_ids)).any())
    height = box_size[2]
    steps = int(round(360.0 / step_deg))
    for k in range(steps):
        az = math.radians(k * step_deg)
        x, y = distance * math.cos(az), distance * math.sin(az)
        if has_ground:
            from .insertion import ground_height_at
            gz = ground_height_at(cloud, x, y, class_sets=class_sets)
        elif len(cloud):
            # Unlabeled scan: a low percentile of z stands in for ground.
            gz = float(np.percentile(cloud.xyz[:, 2], 5.0))
        else:
            gz = 0.0
        box = BoundingBox((x, y, gz + height / 2.0), box_size, az + math.pi / 2.0)
        t_entry = ray_box_intersection(dirs, box)
        hit = np.isfinite(t_entry)
        if not hit.any():
            continue
        first = np.floor(np.where(hit, t_entry, 0.0) / cfg.dr).astype(np.int64)
        np.clip(first, 0, cfg.n_r - 1, out=first)
        mask = hit[None, :, :] & (radial >= first[None, :, :])
        covered = ok & mask[idx[:, 0], idx[:, 1], idx[:, 2]]
        if (covered & obj).any():
            continue
        return mask, cloud.select(covered), box
    raise NoObjectFreeSector(
        f"no {step_deg}-degree placement at {distance} m avoids object points")
