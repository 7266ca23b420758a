"""Command-line driver: edit, build-library, simulate, evaluate, mask-eval.

Exit codes: 0 success, 2 bad config or arguments, 3 missing or malformed
files, 4 pipeline failures (empty boxes, no donor sector, out-of-grid
objects, missing ground), 5 metric preconditions.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, ScanForgeError
from .geometry import Pose2_5D
from .grid import DEFAULT_GRID, GridConfig, bin_points, read_grid_rle, voxelize
from .insertion import EditPlan, EditResult, InsertionSpec, RemovalSpec, edit_scene
from .library import build_library, load_library, save_library
from .metrics import bev_histogram, chamfer, jsd, median_bandwidth, mmd, region_bin_count
from .removal import INPAINTERS, average_box_size, synth_eval_mask
from .report import (MetricRow, bev_histogram_figure, format_metric_report,
                     metric_series_figure, scene_bev_figure, write_metric_report)
from .scanio import (load_bundle, read_boxes_text, save_scan, write_boxes_text,
                     write_labels_bin, write_provenance)
from .simulate import paired_scans, parse_scene, raycast_scan

DEFAULT_BOX_SIZE = (4.6, 1.9, 1.7)  # rough sedan envelope, meters

CONFIG_VERSION = "1"
_CONFIG_KEYS = {"version", "scan", "labels", "boxes", "library", "out", "seed",
                "inpainter", "margin", "grid", "remove", "insert"}
_GRID_KEYS = {"n_r", "n_theta", "n_phi", "r_max", "phi_min", "phi_max"}


@dataclass(frozen=True)
class EditConfig:
    """Parsed edit config: inputs, grid, plan, output directory."""

    scans: tuple[str, ...]
    labels: str | None
    boxes: str | None
    library: str | None
    out: str
    grid: GridConfig
    plan: EditPlan
    margin: float


def _parse_grid_value(text: str, lineno: int) -> GridConfig:
    kwargs = {}
    for token in text.split():
        if "=" not in token:
            raise ConfigError(f"grid expects key=value pairs, got {token!r}", lineno)
        key, _, raw = token.partition("=")
        if key not in _GRID_KEYS:
            raise ConfigError(f"unknown grid parameter {key!r}", lineno)
        try:
            kwargs[key] = int(raw) if key.startswith("n_") else float(raw)
        except ValueError:
            raise ConfigError(f"bad grid value {raw!r} for {key}", lineno) from None
    try:
        return replace(DEFAULT_GRID, **kwargs)
    except ValueError as e:
        raise ConfigError(str(e), lineno) from None


def _parse_remove(value: str, lineno: int) -> RemovalSpec:
    parts = value.split()
    try:
        if len(parts) == 2 and parts[0] == "box":
            return RemovalSpec(box_index=int(parts[1]))
        if len(parts) == 2 and parts[0] == "category":
            return RemovalSpec(category=parts[1])
    except ValueError:
        raise ConfigError(f"bad remove value {value!r}", lineno) from None
    raise ConfigError("remove takes 'box <index>' or 'category <name>'", lineno)


def _parse_insert(value: str, lineno: int) -> InsertionSpec:
    parts = value.split()
    if len(parts) < 2 or parts[0] not in ("object", "category"):
        raise ConfigError(
            "insert takes 'object <id>' or 'category <name>', then a pose", lineno)
    kwargs: dict = {"object_id": parts[1]} if parts[0] == "object" else {"category": parts[1]}
    rest = parts[2:]
    try:
        if len(rest) == 4 and rest[0] == "at":
            x, y, yaw_deg = (float(t) for t in rest[1:])
            kwargs["pose"] = Pose2_5D(x, y, math.radians(yaw_deg))
        elif len(rest) == 2 and rest[0] == "at-removed":
            kwargs["at_removed"] = int(rest[1])
        elif len(rest) == 5 and rest[0] == "at-removed" and rest[2] == "perturb":
            kwargs["at_removed"] = int(rest[1])
            kwargs["perturb_trans"] = float(rest[3])
            kwargs["perturb_yaw"] = math.radians(float(rest[4]))
        else:
            raise ConfigError(
                "insert pose must be 'at <x> <y> <yaw_deg>' or "
                "'at-removed <k> [perturb <max_m> <max_deg>]'", lineno)
    except ConfigError:
        raise
    except ValueError as e:
        raise ConfigError(f"bad insert value: {e}", lineno) from None
    try:
        return InsertionSpec(**kwargs)
    except ValueError as e:
        raise ConfigError(str(e), lineno) from None


def parse_edit_config(text: str) -> EditConfig:
    """Parse the line-oriented edit config; see README for the schema.

    Every line is ``key: value``; unknown keys and malformed values
    fail with the offending line number.
    """
    single: dict[str, tuple[str, int]] = {}
    scans: list[str] = []
    removals: list[RemovalSpec] = []
    insertions: list[InsertionSpec] = []
    grid = DEFAULT_GRID
    saw_version = False
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition(":")
        key, value = key.strip(), value.strip()
        if not sep or not value:
            raise ConfigError("expected 'key: value'", lineno)
        if key not in _CONFIG_KEYS:
            raise ConfigError(f"unknown key {key!r}", lineno)
        if key == "version":
            if value != CONFIG_VERSION:
                raise ConfigError(f"unsupported config version {value!r}", lineno)
            saw_version = True
        elif key == "scan":
            scans.append(value)
        elif key == "remove":
            removals.append(_parse_remove(value, lineno))
        elif key == "insert":
            insertions.append(_parse_insert(value, lineno))
        elif key == "grid":
            grid = _parse_grid_value(value, lineno)
        else:
            if key in single:
                raise ConfigError(f"duplicate key {key!r} "
                                  f"(first on line {single[key][1]})", lineno)
            single[key] = (value, lineno)
    if not saw_version:
        raise ConfigError(f"config must declare 'version: {CONFIG_VERSION}'")
    if not scans:
        raise ConfigError("config names no scan")
    if "out" not in single:
        raise ConfigError("config names no output directory ('out: <dir>')")
    if len(scans) > 1:
        for key in ("labels", "boxes"):
            if key in single:
                raise ConfigError(
                    f"{key!r} cannot be set with multiple scans; use sibling "
                    f"files next to each scan", single[key][1])
    seed = 0
    if "seed" in single:
        value, lineno = single["seed"]
        try:
            seed = int(value)
        except ValueError:
            raise ConfigError(f"seed must be an integer, got {value!r}", lineno) from None
    inpainter = "tiling"
    if "inpainter" in single:
        value, lineno = single["inpainter"]
        if value not in INPAINTERS:
            raise ConfigError(f"unknown inpainter {value!r}, choose from "
                              f"{sorted(INPAINTERS)}", lineno)
        inpainter = value
    margin = 0.1
    if "margin" in single:
        value, lineno = single["margin"]
        try:
            margin = float(value)
        except ValueError:
            raise ConfigError(f"margin must be a number, got {value!r}", lineno) from None
    plan = EditPlan(tuple(removals), tuple(insertions), seed, inpainter)
    return EditConfig(tuple(scans), single.get("labels", (None,))[0],
                      single.get("boxes", (None,))[0], single.get("library", (None,))[0],
                      single["out"][0], grid, plan, margin)


def _grid_flags(parser: argparse.ArgumentParser) -> None:
    g = parser.add_argument_group("grid")
    g.add_argument("--n-r", type=int, default=DEFAULT_GRID.n_r)
    g.add_argument("--n-theta", type=int, default=DEFAULT_GRID.n_theta)
    g.add_argument("--n-phi", type=int, default=DEFAULT_GRID.n_phi)
    g.add_argument("--r-max", type=float, default=DEFAULT_GRID.r_max)
    g.add_argument("--phi-min", type=float, default=DEFAULT_GRID.phi_min)
    g.add_argument("--phi-max", type=float, default=DEFAULT_GRID.phi_max)


def _grid_from_args(args) -> GridConfig:
    try:
        return GridConfig(args.n_r, args.n_theta, args.n_phi,
                          args.r_max, args.phi_min, args.phi_max)
    except ValueError as e:
        raise ConfigError(str(e)) from None


def _save_edit_result(out_dir: str, scan_id: str, result: EditResult) -> list[str]:
    os.makedirs(out_dir, exist_ok=True)
    stem = os.path.join(out_dir, scan_id + ".edited")
    save_scan(stem + ".bin", result.cloud)
    labels = result.cloud.labels
    if labels is None:
        labels = np.zeros(len(result.cloud), dtype=np.uint8)
    with open(stem + ".labels", "wb") as f:
        f.write(write_labels_bin(labels))
    with open(stem + ".boxes.txt", "w") as f:
        f.write(write_boxes_text(result.inserted_boxes))
    with open(stem + ".provenance", "wb") as f:
        f.write(write_provenance(result.provenance))
    return [stem + ext for ext in (".bin", ".labels", ".boxes.txt", ".provenance")]


def _edit_one(scan_path: str, config: EditConfig,
              ground_from_inpainted: bool, figures: bool) -> str:
    t0 = time.perf_counter()
    bundle = load_bundle(scan_path, config.labels, config.boxes)
    library = load_library(config.library) if config.library else None
    t1 = time.perf_counter()
    result = edit_scene(bundle, config.plan, library, cfg=config.grid,
                        margin=config.margin,
                        ground_from_inpainted=ground_from_inpainted)
    t2 = time.perf_counter()
    paths = _save_edit_result(config.out, bundle.scan_id, result)
    if figures:
        fig_path = os.path.join(config.out, bundle.scan_id + ".edited.png")
        scene_bev_figure([("input", bundle.cloud), ("edited", result.cloud)],
                         fig_path, boxes=[b for b, _ in result.inserted_boxes],
                         color_by=[None, result.provenance])
        paths.append(fig_path)
    t3 = time.perf_counter()
    d = result.diagnostics
    return (f"{bundle.scan_id}: {len(bundle.cloud)} -> {len(result.cloud)} points "
            f"(removed {d.points_removed}, inpainted {d.points_inpainted}, "
            f"inserted {d.points_inserted}) "
            f"[load {t1 - t0:.3f}s edit {t2 - t1:.3f}s write {t3 - t2:.3f}s] "
            f"-> {paths[0]}")


def cmd_edit(args) -> int:
    with open(args.config, "r") as f:
        config = parse_edit_config(f.read())
    if args.jobs > 1 and len(config.scans) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            futures = [pool.submit(_edit_one, scan, config,
                                   args.ground_from_inpainted, args.figures)
                       for scan in config.scans]
            for fut in futures:
                print(fut.result())
    else:
        for scan in config.scans:
            print(_edit_one(scan, config, args.ground_from_inpainted, args.figures))
    return 0


def cmd_build_library(args) -> int:
    bundles = [load_bundle(path) for path in args.scans]
    categories = None if args.categories is None else set(args.categories.split(","))
    library, skipped = build_library(bundles, categories,
                                     margin=args.margin, min_points=args.min_points,
                                     complete=not args.no_complete)
    save_library(library, args.out)
    for category in library.categories():
        print(f"{category}: {len(library.of_category(category))} objects")
    print(f"library: {len(library)} objects ({skipped} boxes skipped), -> {args.out}")
    return 0


def cmd_simulate(args) -> int:
    with open(args.scene, "r") as f:
        scene = parse_scene(f.read())
    cfg = _grid_from_args(args)
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    scan = raycast_scan(scene, cfg, noise_sigma=args.noise_sigma, rng=rng)
    stem = os.path.join(args.out, args.id)
    save_scan(stem + ".bin", scan.cloud)
    with open(stem + ".labels", "wb") as f:
        f.write(write_labels_bin(scan.cloud.labels))
    with open(stem + ".boxes.txt", "w") as f:
        f.write(write_boxes_text(scene.objects))
    print(f"{args.id}: {len(scan.cloud)} points, {len(scene.objects)} boxes -> {stem}.bin")
    if args.pair is not None:
        with_scan, without_scan, revealed = paired_scans(scene, args.pair, cfg)
        for tag, cloud in ((f"nobox{args.pair}", without_scan.cloud),
                           (f"revealed{args.pair}", revealed)):
            save_scan(f"{stem}.{tag}.bin", cloud)
            with open(f"{stem}.{tag}.labels", "wb") as f:
                f.write(write_labels_bin(cloud.labels))
            print(f"{args.id}: {len(cloud)} points -> {stem}.{tag}.bin")
    return 0


def _report_rows(pred_grid, ref_grid, region, pred_cloud, ref_cloud,
                 bandwidth, log_base) -> list[MetricRow]:
    h_pred = bev_histogram(pred_grid, region)
    h_ref = bev_histogram(ref_grid, region)
    if region is not None:
        size = str(region_bin_count(region))
    else:
        size = str(h_pred.values.size)
    base_txt = "e" if log_base is None else format(log_base, "g")
    rows = [MetricRow("jsd", jsd(h_pred, h_ref, log_base), f"log_base={base_txt}", size)]
    sigma = bandwidth if bandwidth is not None else median_bandwidth([h_pred], [h_ref])
    rows.append(MetricRow("mmd", mmd([h_pred], [h_ref], sigma),
                          f"kernel=gaussian bandwidth={sigma:.9g}", size))
    rows.append(MetricRow("chamfer_m", chamfer(pred_cloud, ref_cloud), "", size))
    return rows


def _cloud_in_region(cloud, region, cfg):
    idx, ok = bin_points(cloud.xyz, cfg)
    keep = ok.copy()
    keep[ok] = region[idx[ok, 0], idx[ok, 1], idx[ok, 2]]
    return cloud.select(keep)


def cmd_evaluate(args) -> int:
    cfg = _grid_from_args(args)
    pred = load_bundle(args.pred).cloud
    ref = load_bundle(args.ref).cloud
    region = None
    if args.region is not None:
        with open(args.region, "r") as f:
            region, region_cfg = read_grid_rle(f.read())
        if region_cfg != cfg:
            raise ConfigError("region mask was built on a different grid")
        pred_pts, ref_pts = (_cloud_in_region(c, region, cfg) for c in (pred, ref))
    else:
        pred_pts, ref_pts = pred, ref
    pred_grid, ref_grid = voxelize(pred, cfg), voxelize(ref, cfg)
    rows = _report_rows(pred_grid, ref_grid, region, pred_pts, ref_pts,
                        args.bandwidth, args.log_base)
    print(format_metric_report(rows), end="")
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        write_metric_report(os.path.join(args.out, "report.tsv"), rows)
        if not args.no_figures:
            bev_histogram_figure(
                [("prediction", bev_histogram(pred_grid, region)),
                 ("reference", bev_histogram(ref_grid, region))],
                cfg, os.path.join(args.out, "bev_histograms.png"))
            scene_bev_figure([("prediction", pred), ("reference", ref)],
                             os.path.join(args.out, "clouds_bev.png"))
    return 0


def cmd_mask_eval(args) -> int:
    cfg = _grid_from_args(args)
    names = (sorted(INPAINTERS) if args.inpainter == "both" else [args.inpainter])
    per_scan: dict[str, dict[str, list[float]]] = {n: {"jsd": [], "chamfer": []}
                                                   for n in names}
    hist_sets: dict[str, list] = {n: [] for n in names}
    truth_hists = []
    rows: list[MetricRow] = []
    first_panels = None
    for path in args.scans:
        bundle = load_bundle(path)
        box_size = (average_box_size(bundle.boxes) if bundle.boxes
                    else tuple(args.box_size))
        mask, held_out, _ = synth_eval_mask(bundle.cloud, box_size, cfg,
                                            distance=args.distance,
                                            step_deg=args.step_deg,
                                            boxes=bundle.boxes)
        keep = np.ones(len(bundle.cloud), dtype=bool)
        covered = _covered_indices(bundle.cloud, mask, cfg)
        keep[covered] = False
        background = bundle.cloud.select(keep)
        bg_grid = voxelize(background, cfg)
        h_truth = bev_histogram(voxelize(held_out, cfg), mask)
        truth_hists.append(h_truth)
        size = str(region_bin_count(mask))
        for name in names:
            generated = INPAINTERS[name](background, bg_grid, mask, cfg)
            h_gen = bev_histogram(voxelize(generated, cfg), mask)
            hist_sets[name].append(h_gen)
            value = jsd(h_gen, h_truth, args.log_base)
            per_scan[name]["jsd"].append(value)
            rows.append(MetricRow(f"jsd[{bundle.scan_id}][{name}]", value,
                                  _base_txt(args.log_base), size))
            if len(generated) and len(held_out):
                d = chamfer(generated, held_out)
                per_scan[name]["chamfer"].append(d)
                rows.append(MetricRow(f"chamfer_m[{bundle.scan_id}][{name}]", d, "", size))
            if first_panels is None and name == names[-1]:
                first_panels = ([("held-out truth", held_out), (name, generated)], mask)
    for name in names:
        for metric in ("jsd", "chamfer"):
            vals = per_scan[name][metric]
            if vals:
                rows.append(MetricRow(f"{metric}_mean[{name}]", float(np.mean(vals)),
                                      f"n={len(vals)}", ""))
                rows.append(MetricRow(f"{metric}_std[{name}]",
                                      float(np.std(vals, ddof=0)), f"n={len(vals)}", ""))
        if truth_hists and hist_sets[name]:
            sigma = (args.bandwidth if args.bandwidth is not None
                     else median_bandwidth(hist_sets[name], truth_hists))
            rows.append(MetricRow(f"mmd[{name}]", mmd(hist_sets[name], truth_hists, sigma),
                                  f"kernel=gaussian bandwidth={sigma:.9g}",
                                  str(len(truth_hists))))
    print(format_metric_report(rows), end="")
    if args.out is not None:
        os.makedirs(args.out, exist_ok=True)
        write_metric_report(os.path.join(args.out, "mask_eval.tsv"), rows)
        if not args.no_figures:
            series = {f"{n} chamfer (m)": per_scan[n]["chamfer"] for n in names}
            metric_series_figure(series, os.path.join(args.out, "chamfer_per_scene.png"),
                                 ylabel="chamfer (m)")
            if first_panels is not None:
                panels, _ = first_panels
                scene_bev_figure(panels, os.path.join(args.out, "example_fill.png"),
                                 limit=20.0)
    return 0


def _covered_indices(cloud, mask, cfg) -> np.ndarray:
    idx, ok = bin_points(cloud.xyz, cfg)
    sel = ok.copy()
    sel[ok] = mask[idx[ok, 0], idx[ok, 1], idx[ok, 2]]
    return np.flatnonzero(sel)


def _base_txt(log_base) -> str:
    return "log_base=e" if log_base is None else f"log_base={log_base:g}"


def _log_base(text: str) -> float | None:
    if text == "e":
        return None
    return float(text)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="scanforge",
        description="Edit LiDAR scans: remove, inpaint, insert, evaluate.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("edit", help="run an edit config over its scans")
    p.add_argument("config", help="edit config file")
    p.add_argument("--jobs", type=int, default=1, help="parallel scan workers")
    p.add_argument("--figures", action="store_true",
                   help="render a before/after BEV figure per scan")
    p.add_argument("--ground-from-inpainted", action="store_true",
                   help="let ground lookups use inpainted points")
    p.set_defaults(func=cmd_edit)

    p = sub.add_parser("build-library", help="extract objects from scans")
    p.add_argument("scans", nargs="+", help="scan .bin paths")
    p.add_argument("--out", required=True, help="library directory")
    p.add_argument("--categories", default=None,
                   help="comma-separated category filter (default: all)")
    p.add_argument("--min-points", type=int, default=10)
    p.add_argument("--margin", type=float, default=0.1)
    p.add_argument("--no-complete", action="store_true",
                   help="store partial clouds without symmetry completion")
    p.set_defaults(func=cmd_build_library)

    p = sub.add_parser("simulate", help="raycast an analytic scene")
    p.add_argument("scene", help="scene text file")
    p.add_argument("--out", required=True)
    p.add_argument("--id", default="sim", help="output scan id")
    p.add_argument("--pair", type=int, default=None, metavar="N",
                   help="also emit the scene without object N plus revealed points")
    p.add_argument("--noise-sigma", type=float, default=0.0)
    p.add_argument("--seed", type=int, default=0)
    _grid_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("evaluate", help="compare a generated scan against a reference")
    p.add_argument("pred", help="generated scan .bin")
    p.add_argument("ref", help="reference scan .bin")
    p.add_argument("--region", default=None, help="grid run-length mask file")
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--log-base", type=_log_base, default=None,
                   help="JSD log base: 'e' (default) or a number")
    p.add_argument("--out", default=None, help="directory for report.tsv and figures")
    p.add_argument("--no-figures", action="store_true")
    _grid_flags(p)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("mask-eval",
                       help="hold out a synthetic occlusion mask per scan and "
                            "score the inpainters inside it")
    p.add_argument("scans", nargs="+")
    p.add_argument("--inpainter", choices=sorted(INPAINTERS) + ["both"],
                   default="both")
    p.add_argument("--distance", type=float, default=10.0)
    p.add_argument("--step-deg", type=float, default=1.0)
    p.add_argument("--box-size", type=float, nargs=3, default=DEFAULT_BOX_SIZE,
                   metavar=("L", "W", "H"),
                   help="synthetic box size when a scan has no boxes")
    p.add_argument("--bandwidth", type=float, default=None)
    p.add_argument("--log-base", type=_log_base, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--no-figures", action="store_true")
    _grid_flags(p)
    p.set_defaults(func=cmd_mask_eval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ScanForgeError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.exit_code
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
