"""Tabular metric reports and the figures that ride along with them."""

from __future__ import annotations

from typing import NamedTuple, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .geometry import BoundingBox, PointCloud
from .grid import GridConfig
from .metrics import BEVHistogram


class MetricRow(NamedTuple):
    metric: str
    value: float
    params: str = ""
    region_size: str = ""


REPORT_HEADER = "metric\tvalue\tparams\tregion_size"


def format_metric_report(rows: Sequence[MetricRow]) -> str:
    lines = [REPORT_HEADER]
    for row in rows:
        lines.append(f"{row.metric}\t{row.value:.9g}\t{row.params}\t{row.region_size}")
    return "\n".join(lines) + "\n"


def write_metric_report(path: str, rows: Sequence[MetricRow]) -> None:
    with open(path, "w") as f:
        f.write(format_metric_report(rows))


def bev_histogram_figure(panels: Sequence[tuple[str, BEVHistogram]],
                         cfg: GridConfig, path: str) -> None:
    """One image panel per histogram, azimuth on x and radius on y."""
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(5.0 * n, 4.0), squeeze=False)
    for ax, (title, hist) in zip(axes[0], panels):
        im = ax.imshow(hist.values.T, origin="lower", aspect="auto",
                       extent=(0.0, 360.0, 0.0, cfg.r_max), cmap="viridis")
        ax.set_title(title)
        ax.set_xlabel("azimuth (deg)")
        ax.set_ylabel("range (m)")
        fig.colorbar(im, ax=ax, fraction=0.046)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _draw_box(ax, box: BoundingBox, color: str) -> None:
    l, w = box.size[0] / 2.0, box.size[1] / 2.0
    corners = np.array([[l, w], [l, -w], [-l, -w], [-l, w], [l, w]])
    c, s = np.cos(box.yaw), np.sin(box.yaw)
    rot = corners @ np.array([[c, s], [-s, c]])
    ax.plot(rot[:, 0] + box.center[0], rot[:, 1] + box.center[1],
            color=color, linewidth=1.2)


def scene_bev_figure(panels: Sequence[tuple[str, PointCloud]], path: str,
                     boxes: Sequence[BoundingBox] = (),
                     color_by: Sequence[np.ndarray | None] | None = None,
                     limit: float = 55.0) -> None:
    """Top-down scatter of one or more clouds, with optional boxes.

    color_by supplies per-panel integer tags (provenance, labels); None
    entries fall back to height coloring.
    """
    n = len(panels)
    fig, axes = plt.subplots(1, n, figsize=(5.5 * n, 5.0), squeeze=False)
    for k, (ax, (title, cloud)) in enumerate(zip(axes[0], panels)):
        tags = None if color_by is None else color_by[k]
        c = cloud.xyz[:, 2] if tags is None else tags
        ax.scatter(cloud.xyz[:, 0], cloud.xyz[:, 1], c=c, s=0.5, cmap="viridis")
        for box in boxes:
            _draw_box(ax, box, "crimson")
        ax.set_title(title)
        ax.set_xlim(-limit, limit)
        ax.set_ylim(-limit, limit)
        ax.set_aspect("equal")
        ax.set_xlabel("x (m)")
        ax.set_ylabel("y (m)")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def metric_series_figure(series: dict[str, Sequence[float]], path: str,
                         ylabel: str = "value") -> None:
    """Per-scene metric traces for side-by-side method comparison."""
    fig, ax = plt.subplots(figsize=(7.0, 4.0))
    for name, values in series.items():
        ax.plot(range(len(values)), values, marker="o", markersize=3,
                linewidth=1.0, label=name)
    ax.set_xlabel("scene")
    ax.set_ylabel(ylabel)
    ax.legend()
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
