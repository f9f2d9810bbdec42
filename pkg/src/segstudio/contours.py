"""Structure-set ingest and contour rasterization.

The ingest format is a JSON document (see ``docs`` in README) carrying the
same information as a DICOM RTSTRUCT: an ROI table (StructureSetROISequence,
tag 3006,0020) and per-ROI contour vertex lists in patient mm
(ROIContourSequence, tag 3006,0039)::

    {
      "format": "structure-set/v1",
      "series_ref": "<series instance uid>",
      "rois": [{"number": 1, "name": "liver", "color": [255, 0, 0]}],
      "contours": [{"roi_number": 1, "points": [[x, y, z], ...]}]
    }

Rasterization samples voxel CENTERS under the even-odd rule, so nested
contours of one ROI cut holes.  Points exactly on an edge follow the +x
ray-casting convention with half-open edges (lower endpoint included, upper
excluded) — deterministic, never double counted at shared vertices.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ParseError
from .geometry import VolumeGrid, WorldPoint, _dot
from .mask import ROI, Provenance, SegmentationSet, VoxelMask

_PALETTE = (
    (230, 25, 75), (60, 180, 75), (255, 225, 25), (0, 130, 200),
    (245, 130, 48), (145, 30, 180), (70, 240, 240), (240, 50, 230),
)

_COPLANAR_TOL = 1e-3  # mm along the slice normal


@dataclass(frozen=True)
class Contour:
    """One closed polygon (implicitly closed, >= 3 vertices) of an ROI."""

    roi_number: int
    vertices: tuple[WorldPoint, ...]


@dataclass(frozen=True)
class ContourSet:
    series_ref: str
    rois: tuple[tuple[ROI, tuple[Contour, ...]], ...]


def parse_structure_set(payload: bytes | str | dict) -> ContourSet:
    """Parse the JSON structure-set document into a ContourSet."""
    if isinstance(payload, (bytes, str)):
        try:
            doc = json.loads(payload)
        except json.JSONDecodeError as exc:
            raise ParseError(f"structure set is not valid JSON: {exc}") from exc
    else:
        doc = payload
    if not isinstance(doc, dict):
        raise ParseError("structure set must be a JSON object")

    series_ref = doc.get("series_ref", "")
    rois: dict[int, ROI] = {}
    for idx, entry in enumerate(doc.get("rois", [])):
        if "number" not in entry:
            raise ParseError(f"ROI entry {idx} has no number")
        number = int(entry["number"])
        name = entry.get("name")
        if not name:
            raise ParseError(f"ROI {number} has no name")
        color = tuple(entry.get("color") or _PALETTE[idx % len(_PALETTE)])
        if number in rois:
            raise ParseError(f"duplicate ROI number {number}")
        rois[number] = ROI(number=number, name=str(name), color=color)

    contours: dict[int, list[Contour]] = {n: [] for n in rois}
    for idx, entry in enumerate(doc.get("contours", [])):
        roi_number = int(entry.get("roi_number", -1))
        if roi_number not in rois:
            raise ParseError(f"contour {idx} references undeclared ROI {roi_number}")
        points = entry.get("points", [])
        if len(points) < 3:
            raise ParseError(f"contour {idx} has {len(points)} vertices; need >= 3")
        vertices = tuple(WorldPoint(float(p[0]), float(p[1]), float(p[2])) for p in points)
        contours[roi_number].append(Contour(roi_number=roi_number, vertices=vertices))

    return ContourSet(
        series_ref=str(series_ref),
        rois=tuple((rois[n], tuple(contours[n])) for n in sorted(rois)),
    )


def _slice_index_for(contour: Contour, grid: VolumeGrid) -> int:
    """Nearest slice for a contour; rejects off-plane and out-of-stack ones."""
    n = grid.normal
    offsets = [_dot((v.x - grid.origin[0], v.y - grid.origin[1], v.z - grid.origin[2]), n)
               for v in contour.vertices]
    if max(offsets) - min(offsets) > _COPLANAR_TOL:
        raise GeometryError(
            f"contour for ROI {contour.roi_number} is not coplanar "
            f"(spread {max(offsets) - min(offsets):.4g} mm along slice normal)")
    w = sum(offsets) / len(offsets)
    k = int(round(w / grid.slice_spacing))
    k = min(max(k, 0), grid.slices - 1)
    if abs(w - k * grid.slice_spacing) > grid.slice_spacing / 2 + 1e-9:
        raise GeometryError(
            f"contour plane at {w:.3f} mm is farther than half a slice spacing from every slice")
    return k


def _polygon_crossings(uv: np.ndarray, us: np.ndarray, vs: np.ndarray) -> np.ndarray:
    """Per-pixel +x ray crossing counts for one polygon.

    ``uv`` is the (n,2) vertex array in slice-plane mm, ``us``/``vs`` the
    pixel-center coordinate axes.  Edges are half-open in v: the lower
    endpoint counts, the upper does not, and horizontal edges never do.
    """
    crossings = np.zeros((vs.size, us.size), dtype=np.int64)
    v1 = uv
    v2 = np.roll(uv, -1, axis=0)
    for (u_a, v_a), (u_b, v_b) in zip(v1, v2):
        if v_a == v_b:
            continue
        straddles = (v_a > vs) != (v_b > vs)  # half-open [min, max)
        if not straddles.any():
            continue
        u_int = u_a + (vs[straddles] - v_a) * (u_b - u_a) / (v_b - v_a)
        crossings[straddles] += us[None, :] < u_int[:, None]
    return crossings


def rasterize_contours(cs: ContourSet, grid: VolumeGrid) -> SegmentationSet:
    """Rasterize every ROI's contours onto ``grid`` (voxel-center, even-odd)."""
    sp_row, sp_col = grid.pixel_spacing
    us = np.arange(grid.cols, dtype=float) * sp_col
    vs = np.arange(grid.rows, dtype=float) * sp_row
    origin = grid.origin

    pairs = []
    for roi, contours in cs.rois:
        bits = np.zeros(grid.shape, dtype=bool)
        per_slice: dict[int, np.ndarray] = {}
        for contour in contours:
            k = _slice_index_for(contour, grid)
            uv = np.array([
                (_dot((v.x - origin[0], v.y - origin[1], v.z - origin[2]), grid.col_cos),
                 _dot((v.x - origin[0], v.y - origin[1], v.z - origin[2]), grid.row_cos))
                for v in contour.vertices])
            acc = per_slice.setdefault(k, np.zeros((grid.rows, grid.cols), dtype=np.int64))
            acc += _polygon_crossings(uv, us, vs)
        for k, acc in per_slice.items():
            bits[k] = (acc % 2).astype(bool)
        pairs.append((roi, VoxelMask(grid, bits)))

    return SegmentationSet(series_ref=cs.series_ref, rois=tuple(pairs),
                           provenance=Provenance(source="manual"))
