"""Readers and writers for scan files.

Binary scan format: little-endian float32 records of
(x, y, z, intensity, ring), 20 bytes per point, no header.
Label format: one uint8 per point, same order as the scan.
Box text format: one box per line,
``cx cy cz length width height yaw category``.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .errors import MalformedBoxLine, LabelLengthMismatch, MalformedScan
from .geometry import BoundingBox, PointCloud

RECORD_BYTES = 20


def read_scan_bin(data: bytes) -> PointCloud:
    """Decode a binary scan buffer.

    Raises MalformedScan if the length is not a multiple of 20 bytes or
    any decoded field violates point invariants (non-finite coordinate
    or intensity, negative intensity or ring).
    """
    if len(data) % RECORD_BYTES != 0:
        raise MalformedScan(
            f"scan buffer is {len(data)} bytes, not a multiple of {RECORD_BYTES}")
    rec = np.frombuffer(data, dtype="<f4").reshape(-1, 5).astype(np.float64)
    if not np.isfinite(rec[:, :4]).all():
        raise MalformedScan("scan contains non-finite coordinates or intensity")
    if (rec[:, 3] < 0.0).any():
        raise MalformedScan("scan contains negative intensity")
    ring = np.rint(rec[:, 4]).astype(np.int32)
    if (ring < 0).any():
        raise MalformedScan("scan contains negative ring index")
    return PointCloud(rec[:, :3], rec[:, 3], ring)


def write_scan_bin(cloud: PointCloud) -> bytes:
    """Encode a cloud in the binary scan format.

    Positions and intensity are stored at float32 precision. Absent
    rings (-1) are written as 0; the format has no absence marker.
    """
    rec = np.empty((len(cloud), 5), dtype="<f4")
    rec[:, :3] = cloud.xyz
    rec[:, 3] = cloud.intensity
    rec[:, 4] = np.where(cloud.ring < 0, 0, cloud.ring)
    return rec.tobytes()


def read_labels_bin(data: bytes, n_points: int) -> np.ndarray:
    if len(data) != n_points:
        raise LabelLengthMismatch(
            f"label buffer holds {len(data)} entries for {n_points} points")
    return np.frombuffer(data, dtype=np.uint8).copy()


def write_labels_bin(labels: np.ndarray) -> bytes:
    return np.ascontiguousarray(labels, dtype=np.uint8).tobytes()


def _fmt(x: float) -> str:
    return format(float(x), ".9g")


def parse_box_line(line: str, lineno: int) -> tuple[BoundingBox, str]:
    parts = line.split()
    if len(parts) != 8:
        raise MalformedBoxLine(f"expected 8 fields, got {len(parts)}", lineno)
    try:
        vals = [float(t) for t in parts[:7]]
    except ValueError as e:
        raise MalformedBoxLine(str(e), lineno) from None
    try:
        box = BoundingBox(tuple(vals[0:3]), tuple(vals[3:6]), vals[6])
    except ValueError as e:
        raise MalformedBoxLine(str(e), lineno) from None
    return box, parts[7]


def format_box_line(box: BoundingBox, category: str) -> str:
    if not category or any(ch.isspace() for ch in category):
        raise ValueError("category must be a non-empty whitespace-free token")
    fields = list(box.center) + list(box.size) + [box.yaw]
    return " ".join(_fmt(v) for v in fields) + f" {category}"


def read_boxes_text(text: str) -> tuple[tuple[BoundingBox, str], ...]:
    """Parse box lines; blank lines and ``#`` comments are skipped."""
    out = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        out.append(parse_box_line(line, lineno))
    return tuple(out)


def write_boxes_text(boxes) -> str:
    return "".join(format_box_line(b, cat) + "\n" for b, cat in boxes)


def read_scan_text(text: str) -> PointCloud:
    """ASCII debug format: ``x y z intensity ring`` per line, ring -1 allowed."""
    rows = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 5:
            raise MalformedScan(f"line {lineno}: expected 5 fields, got {len(parts)}")
        try:
            rows.append([float(t) for t in parts])
        except ValueError as e:
            raise MalformedScan(f"line {lineno}: {e}") from None
    arr = np.array(rows).reshape(len(rows), 5)
    return PointCloud(arr[:, :3], arr[:, 3], arr[:, 4].astype(np.int32))


def write_scan_text(cloud: PointCloud) -> str:
    lines = []
    for i in range(len(cloud)):
        x, y, z = cloud.xyz[i]
        lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(z)} "
                     f"{_fmt(cloud.intensity[i])} {int(cloud.ring[i])}\n")
    return "".join(lines)


def read_provenance(data: bytes, n_points: int) -> np.ndarray:
    if len(data) != n_points:
        raise LabelLengthMismatch(
            f"provenance buffer holds {len(data)} entries for {n_points} points")
    return np.frombuffer(data, dtype=np.uint8).copy()


def write_provenance(prov: np.ndarray) -> bytes:
    return np.ascontiguousarray(prov, dtype=np.uint8).tobytes()


@dataclass(frozen=True)
class ScanBundle:
    """A scan plus whatever annotations came with it."""

    cloud: PointCloud
    boxes: tuple[tuple[BoundingBox, str], ...] = ()
    scan_id: str = "scan"

    def __post_init__(self):
        if not self.scan_id:
            raise ValueError("scan_id must be non-empty")
        object.__setattr__(self, "boxes", tuple(self.boxes))


def load_scan(path: str) -> PointCloud:
    with open(path, "rb") as f:
        return read_scan_bin(f.read())


def save_scan(path: str, cloud: PointCloud) -> None:
    with open(path, "wb") as f:
        f.write(write_scan_bin(cloud))


def load_bundle(scan_path: str, labels_path: str | None = None,
                boxes_path: str | None = None, scan_id: str | None = None) -> ScanBundle:
    """Load a scan and optional sibling annotation files.

    When labels_path/boxes_path are None, files named ``<stem>.labels``
    and ``<stem>.boxes.txt`` next to the scan are picked up if present.
    """
    cloud = load_scan(scan_path)
    stem = scan_path
    for suffix in (".pcd.bin", ".bin"):
        if stem.endswith(suffix):
            stem = stem[: -len(suffix)]
            break
    if labels_path is None:
        candidate = stem + ".labels"
        labels_path = candidate if os.path.exists(candidate) else None
    if boxes_path is None:
        candidate = stem + ".boxes.txt"
        boxes_path = candidate if os.path.exists(candidate) else None
    if labels_path is not None:
        with open(labels_path, "rb") as f:
            cloud = cloud.with_labels(read_labels_bin(f.read(), len(cloud)))
    boxes: tuple = ()
    if boxes_path is not None:
        with open(boxes_path, "r") as f:
            boxes = read_boxes_text(f.read())
    if scan_id is None:
        scan_id = os.path.basename(stem)
    return ScanBundle(cloud, boxes, scan_id)
