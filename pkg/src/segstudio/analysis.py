"""Quantitative comparison of segmentations: DICE, XOR discrepancy, reports.

DICE of two empty masks is defined as 1.0 (a correctly predicted absent
structure is a success); the score carries an ``empty_pair`` flag so the
case stays auditable.  ROIs are matched by exact, case-sensitive name;
unmatched ROIs are scored against an empty mask and surfaced with
``matched=False``, never dropped.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatchError, SeriesMismatchError
from .mask import ROI, Provenance, SegmentationSet, VoxelMask, new_mask, now_iso

DISCREPANCY_COLOR = (255, 255, 0)  # single high-contrast overlay color


class DiceScore(float):
    """A float in [0, 1] flagged when both masks were empty."""

    empty_pair: bool

    def __new__(cls, value: float, empty_pair: bool = False):
        score = super().__new__(cls, value)
        score.empty_pair = empty_pair
        return score


def _require_same_grid(a: VoxelMask, b: VoxelMask) -> None:
    if a.grid != b.grid:
        raise GridMismatchError("masks live on different grids")


def overlap_counts(a: VoxelMask, b: VoxelMask) -> tuple[int, int, int]:
    """(|A|, |B|, |A∩B|) via the vectorized bit kernel."""
    _require_same_grid(a, b)
    return (
        int(np.count_nonzero(a.bits)),
        int(np.count_nonzero(b.bits)),
        int(np.count_nonzero(a.bits & b.bits)),
    )


def dice(a: VoxelMask, b: VoxelMask) -> DiceScore:
    """2|A∩B| / (|A|+|B|); 1.0 with the empty_pair flag when both are empty."""
    na, nb, ni = overlap_counts(a, b)
    if na + nb == 0:
        return DiceScore(1.0, empty_pair=True)
    return DiceScore(2.0 * ni / (na + nb))


def discrepancy_map(a: VoxelMask, b: VoxelMask) -> VoxelMask:
    """Symmetric difference: set iff set in exactly one of the two masks."""
    _require_same_grid(a, b)
    return VoxelMask(a.grid, a.bits ^ b.bits)


@dataclass(frozen=True)
class RoiEvaluation:
    roi_name: str
    dice: float
    empty_pair: bool
    pred_voxels: int
    gt_voxels: int
    intersection_voxels: int
    discrepancy_voxels: int
    matched: bool


@dataclass(frozen=True)
class EvaluationReport:
    """Per-ROI DICE and discrepancy counts for one prediction/truth pair."""

    series_ref: str
    pred_version: int
    gt_version: int
    entries: tuple[RoiEvaluation, ...]
    mean_dice: float  # over matched ROIs only
    matched_count: int
    unmatched_count: int
    created_at: str = field(default_factory=now_iso)

    def to_dict(self) -> dict:
        return {
            "format": "evaluation-report/v1",
            "series_ref": self.series_ref,
            "pred_version": self.pred_version,
            "gt_version": self.gt_version,
            "mean_dice": self.mean_dice,
            "matched_count": self.matched_count,
            "unmatched_count": self.unmatched_count,
            "created_at": self.created_at,
            "entries": [
                {
                    "roi_name": e.roi_name,
                    "dice": e.dice,
                    "empty_pair": e.empty_pair,
                    "pred_voxels": e.pred_voxels,
                    "gt_voxels": e.gt_voxels,
                    "intersection_voxels": e.intersection_voxels,
                    "discrepancy_voxels": e.discrepancy_voxels,
                    "matched": e.matched,
                }
                for e in self.entries
            ],
        }


def evaluate(pred: SegmentationSet, gt: SegmentationSet) -> tuple[EvaluationReport, SegmentationSet]:
    """Compare two segmentation sets ROI-by-ROI.

    Returns the report plus a derived segmentation set holding one
    "<roi>-discrepancy" XOR mask per evaluated ROI.
    """
    if pred.series_ref != gt.series_ref:
        raise SeriesMismatchError(
            f"segmentations reference different series ({pred.series_ref!r} vs {gt.series_ref!r})")
    grid = pred.grid or gt.grid
    if pred.grid and gt.grid and pred.grid != gt.grid:
        raise GridMismatchError("segmentations live on different grids")

    pred_by_name = {roi.name: m for roi, m in pred.rois}
    gt_by_name = {roi.name: m for roi, m in gt.rois}
    names = [roi.name for roi, _ in pred.rois]
    names += [roi.name for roi, _ in gt.rois if roi.name not in pred_by_name]

    entries = []
    disc_rois = []
    for idx, name in enumerate(names, start=1):
        empty = new_mask(grid)
        a = pred_by_name.get(name, empty)
        b = gt_by_name.get(name, empty)
        matched = name in pred_by_name and name in gt_by_name
        na, nb, ni = overlap_counts(a, b)
        score = dice(a, b)
        disc = discrepancy_map(a, b)
        entries.append(RoiEvaluation(
            roi_name=name, dice=float(score), empty_pair=score.empty_pair,
            pred_voxels=na, gt_voxels=nb, intersection_voxels=ni,
            discrepancy_voxels=na + nb - 2 * ni, matched=matched))
        disc_rois.append((ROI(number=idx, name=f"{name}-discrepancy", color=DISCREPANCY_COLOR), disc))

    matched_scores = [e.dice for e in entries if e.matched]
    report = EvaluationReport(
        series_ref=pred.series_ref,
        pred_version=pred.version,
        gt_version=gt.version,
        entries=tuple(entries),
        mean_dice=sum(matched_scores) / len(matched_scores) if matched_scores else 0.0,
        matched_count=len(matched_scores),
        unmatched_count=len(entries) - len(matched_scores),
    )
    discrepancy = SegmentationSet(
        series_ref=pred.series_ref, rois=tuple(disc_rois),
        provenance=Provenance(source="derived"))
    return report, discrepancy
