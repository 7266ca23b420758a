import math

import numpy as np
import pytest

from scanforge.errors import DataError, EmptyCategory, TooFewPoints
from scanforge.geometry import BoundingBox, PointCloud, Pose2_5D
from scanforge.library import (GroundMap, LibraryObject, ObjectLibrary,
                               build_library, complete_object, extract_object,
                               ground_bev_map, load_library, mirror_complete,
                               perturb_pose, sample_object, save_library)
from scanforge.scanio import ScanBundle
from scanforge.simulate import box_surface_points


def _cloud(xyz, labels=None):
    xyz = np.asarray(xyz, dtype=np.float64).reshape(-1, 3)
    n = len(xyz)
    lab = None if labels is None else np.asarray(labels, dtype=np.uint8)
    return PointCloud(xyz, np.zeros(n), np.zeros(n, np.int32), lab)


def _box_cloud(box, n=60, seed=0):
    rng = np.random.default_rng(seed)
    local = rng.uniform(-0.5, 0.5, (n, 3)) * np.asarray(box.size) * 0.9
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    world = np.stack([c * local[:, 0] - s * local[:, 1],
                      s * local[:, 0] + c * local[:, 1],
                      local[:, 2]], axis=1) + np.asarray(box.center)
    return _cloud(world, labels=np.full(n, 17))


def test_extract_object_canonical_frame():
    box = BoundingBox((5.0, 5.0, 0.0), (4.0, 2.0, 1.6), math.pi / 2.0)
    cloud = _cloud([[5.0, 6.0, 0.0]] * 12, labels=[17] * 12)
    obj = extract_object(cloud, box, "car", min_points=10)
    assert np.allclose(obj.cloud.xyz[0], [1.0, 0.0, 0.0], atol=1e-9)
    assert obj.dims == (4.0, 2.0, 1.6)
    assert obj.cloud.labels is None
    assert not obj.completed


def test_extract_skips_nonvehicle_points():
    box = BoundingBox((10.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    cloud = _box_cloud(box, 40)
    labels = cloud.labels.copy()
    labels[:20] = 24  # ground caught inside the box
    cloud = cloud.with_labels(labels)
    obj = extract_object(cloud, box, "car")
    assert len(obj.cloud) == 20


def test_extract_too_few_points():
    box = BoundingBox((10.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    with pytest.raises(TooFewPoints):
        extract_object(_box_cloud(box, 5), box, "car", min_points=10)


def test_mirror_complete_examples():
    # off-plane point gains its reflection, on-plane point does not
    cloud = _cloud([[1.0, 0.5, 0.3], [1.0, 0.0, 0.3]])
    out = mirror_complete(cloud)
    assert len(out) == 3
    rows = {tuple(np.round(p, 9)) for p in out.xyz}
    assert (1.0, -0.5, 0.3) in rows and (1.0, 0.5, 0.3) in rows
    again = mirror_complete(out)
    assert len(again) == len(out)


def test_mirror_symmetrizes_extent(rng):
    xyz = rng.uniform(-1.0, 1.0, (200, 3)) * np.array([2.0, 0.9, 0.7])
    xyz = xyz[xyz[:, 1] > -0.2]  # lopsided in y
    out = mirror_complete(_cloud(xyz))
    assert abs(out.xyz[:, 1].max() + out.xyz[:, 1].min()) <= 1e-3


def test_complete_object_idempotent():
    box = BoundingBox((0.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    obj = LibraryObject("a", "car", _box_cloud(box, 30), box.size, "s")
    done = complete_object(obj)
    assert done.completed
    assert complete_object(done) is done


def test_library_lookup_and_sampling():
    box = BoundingBox((0.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    objs = [LibraryObject(f"obj-{k}", "car" if k < 4 else "truck",
                          _box_cloud(box, 20, seed=k), box.size, "s")
            for k in range(6)]
    lib = ObjectLibrary(tuple(objs))
    assert lib.get("obj-2").object_id == "obj-2"
    with pytest.raises(KeyError):
        lib.get("missing")
    assert lib.categories() == ("car", "truck")
    assert len(lib.of_category("car")) == 4
    with pytest.raises(EmptyCategory):
        sample_object(lib, "bike")
    with pytest.raises(ValueError):
        ObjectLibrary((objs[0], objs[0]))


def test_sampling_is_roughly_uniform():
    box = BoundingBox((0.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    objs = [LibraryObject(f"obj-{k}", "car", _box_cloud(box, 20, seed=k),
                          box.size, "s") for k in range(4)]
    lib = ObjectLibrary(tuple(objs))
    rng = np.random.default_rng(3)
    counts = {o.object_id: 0 for o in objs}
    for _ in range(10000):
        counts[sample_object(lib, "car", rng).object_id] += 1
    for c in counts.values():
        assert 0.22 <= c / 10000.0 <= 0.28


def test_extent_invariant_enforced():
    xyz = np.array([[5.0, 0.0, 0.0]])
    with pytest.raises(ValueError):
        LibraryObject("a", "car", _cloud(xyz), (4.0, 2.0, 1.6), "s")


def test_build_library_ids_and_skips():
    box1 = BoundingBox((10.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    box2 = BoundingBox((-10.0, 5.0, 0.0), (4.4, 1.9, 1.5), 0.3)
    dense = _box_cloud(box1, 50, seed=1)
    sparse = _box_cloud(box2, 3, seed=2)
    cloud = PointCloud(np.concatenate([dense.xyz, sparse.xyz]),
                       np.zeros(53), np.zeros(53, np.int32),
                       np.full(53, 17, dtype=np.uint8))
    bundle = ScanBundle(cloud, ((box1, "car"), (box2, "car")), "scan7")
    lib, skipped = build_library([bundle])
    assert skipped == 1
    assert [o.object_id for o in lib] == ["scan7-0000"]
    assert lib.get("scan7-0000").completed


def test_build_library_category_filter():
    box = BoundingBox((10.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    cloud = _box_cloud(box, 40, seed=1)
    bundle = ScanBundle(cloud, ((box, "truck"),), "s1")
    lib, skipped = build_library([bundle], categories={"car"})
    assert len(lib) == 0 and skipped == 0


def test_save_load_roundtrip(tmp_path):
    box = BoundingBox((0.0, 0.0, 0.0), (4.0, 2.0, 1.6), 0.0)
    objs = [LibraryObject(f"o{k}", "car", _box_cloud(box, 25, seed=k),
                          (4.0, 2.0, 1.6), "scanA", k % 2 == 0)
            for k in range(3)]
    lib = ObjectLibrary(tuple(objs))
    save_library(lib, str(tmp_path))
    back = load_library(str(tmp_path))
    assert len(back) == 3
    for o, b in zip(lib, back):
        assert o.object_id == b.object_id and o.dims == b.dims
        assert o.completed == b.completed
        assert np.allclose(o.cloud.xyz, b.cloud.xyz, atol=1e-6)
    # a second save of the loaded library is byte-identical
    second = tmp_path / "again"
    save_library(back, str(second))
    assert (second / "manifest.tsv").read_bytes() == (tmp_path / "manifest.tsv").read_bytes()
    for o in back:
        a = (tmp_path / f"{o.object_id}.bin").read_bytes()
        b = (second / f"{o.object_id}.bin").read_bytes()
        assert a == b


def test_load_library_errors(tmp_path):
    with pytest.raises(DataError):
        load_library(str(tmp_path))
    (tmp_path / "manifest.tsv").write_text("bogus\n")
    with pytest.raises(DataError):
        load_library(str(tmp_path))


def test_dense_cuboid_object():
    size = (4.2, 1.8, 1.6)
    pts = box_surface_points(size, spacing=0.1)
    obj = LibraryObject("cube", "car", _cloud(pts), size, "synthetic", True)
    assert np.abs(obj.cloud.xyz[:, 0]).max() == pytest.approx(2.1)


def test_ground_map_lookup():
    labels = [24, 24, 17]
    cloud = _cloud([[0.2, 0.2, -1.8], [3.0, 1.0, -1.8], [1.0, 1.0, 0.0]], labels)
    gm = ground_bev_map(cloud, cell=0.5)
    assert gm.contains(0.3, 0.3)
    assert gm.contains(3.1, 1.2)
    assert not gm.contains(1.9, 1.9)
    assert not gm.contains(100.0, 100.0)
    empty = ground_bev_map(_cloud([[1.0, 1.0, 0.0]], [17]))
    assert not empty.contains(1.0, 1.0)


def test_perturb_pose_bounds(rng):
    pose = Pose2_5D(5.0, 5.0, 0.5)
    for _ in range(200):
        out = perturb_pose(pose, rng, max_trans=2.5, max_yaw=math.radians(45.0))
        assert math.hypot(out.x - pose.x, out.y - pose.y) <= 2.5 + 1e-12
        dyaw = abs(out.yaw - pose.yaw)
        assert min(dyaw, 2.0 * math.pi - dyaw) <= math.radians(45.0) + 1e-12


def test_perturb_pose_respects_ground_map(rng):
    values = np.zeros((40, 40), dtype=bool)
    values[:, :20] = True  # ground only at y < 0
    gm = GroundMap(values, -10.0, -10.0, 0.5)
    pose = Pose2_5D(0.0, -2.0, 0.0)
    for _ in range(100):
        out = perturb_pose(pose, rng, ground_map=gm)
        assert out.y < 0.0


def test_perturb_pose_gives_up_gracefully():
    gm = GroundMap(np.zeros((4, 4), dtype=bool), 0.0, 0.0, 0.5)
    pose = Pose2_5D(100.0, 100.0, 1.0)
    assert perturb_pose(pose, 1, ground_map=gm) == pose


def test_perturb_pose_deterministic():
    pose = Pose2_5D(1.0, 2.0, 0.3)
    a = perturb_pose(pose, 42)
    b = perturb_pose(pose, 42)
    assert a == b and a != pose
