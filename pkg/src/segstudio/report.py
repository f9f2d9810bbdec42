"""Render an evaluation report to files: delimited table plus figures.

Outputs into a directory:

    report.csv              one row per ROI entry
    dice_by_roi.png         per-ROI DICE bar chart
    discrepancy_slices.png  slice montage with the discrepancy overlay
                            (only when series voxels are supplied)
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .analysis import EvaluationReport
from .dicomio import ImageSeries
from .mask import SegmentationSet

CSV_FIELDS = ["roi_name", "matched", "dice", "empty_pair", "pred_voxels",
              "gt_voxels", "intersection_voxels", "discrepancy_voxels"]


def write_report_csv(report: EvaluationReport, path) -> Path:
    path = Path(path)
    with open(path, "w", newline="") as f:
        writer = csv.DictWriter(f, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for e in report.entries:
            writer.writerow({
                "roi_name": e.roi_name, "matched": e.matched, "dice": f"{e.dice:.6f}",
                "empty_pair": e.empty_pair, "pred_voxels": e.pred_voxels,
                "gt_voxels": e.gt_voxels, "intersection_voxels": e.intersection_voxels,
                "discrepancy_voxels": e.discrepancy_voxels,
            })
    return path


def plot_dice_bars(report: EvaluationReport, path) -> Path:
    path = Path(path)
    names = [e.roi_name for e in report.entries]
    scores = [e.dice for e in report.entries]
    colors = ["#2b8cbe" if e.matched else "#d95f0e" for e in report.entries]
    fig, ax = plt.subplots(figsize=(max(4, 0.8 * len(names) + 2), 3.2))
    ax.bar(range(len(names)), scores, color=colors)
    ax.axhline(report.mean_dice, color="gray", linestyle="--", linewidth=1,
               label=f"mean (matched) = {report.mean_dice:.3f}")
    ax.set_xticks(range(len(names)))
    ax.set_xticklabels(names, rotation=30, ha="right", fontsize=8)
    ax.set_ylim(0, 1.05)
    ax.set_ylabel("DICE")
    ax.set_title(f"{report.series_ref}  v{report.pred_version} vs v{report.gt_version}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def plot_discrepancy_slices(series: ImageSeries, discrepancy: SegmentationSet,
                            path, max_panels: int = 8) -> Path:
    """Montage of the slices with the most discrepant voxels."""
    path = Path(path)
    combined = np.zeros(series.grid.shape, dtype=bool)
    for _, mask in discrepancy.rois:
        combined |= mask.bits
    per_slice = combined.reshape(series.grid.slices, -1).sum(axis=1)
    order = np.argsort(per_slice)[::-1]
    picks = [int(k) for k in order[:max_panels] if per_slice[k] > 0] or [int(order[0])]

    cols = min(4, len(picks))
    rows_n = (len(picks) + cols - 1) // cols
    fig, axes = plt.subplots(rows_n, cols, figsize=(3 * cols, 3 * rows_n), squeeze=False)
    lo = float(series.voxels.min())
    hi = float(series.voxels.max())
    for ax, k in zip(axes.flat, picks):
        ax.imshow(series.voxels[k], cmap="gray", vmin=lo, vmax=max(hi, lo + 1))
        overlay = np.zeros((*combined[k].shape, 4))
        overlay[combined[k]] = (1.0, 1.0, 0.0, 0.6)
        ax.imshow(overlay, interpolation="nearest")
        ax.set_title(f"slice {k} ({per_slice[k]} voxels)", fontsize=8)
        ax.axis("off")
    for ax in axes.flat[len(picks):]:
        ax.axis("off")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def render_report(report: EvaluationReport, out_dir,
                  series: ImageSeries | None = None,
                  discrepancy: SegmentationSet | None = None) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = [
        write_report_csv(report, out / "report.csv"),
        plot_dice_bars(report, out / "dice_by_roi.png"),
    ]
    if series is not None and discrepancy is not None:
        written.append(plot_discrepancy_slices(series, discrepancy,
                                               out / "discrepancy_slices.png"))
    return written
