"""Normative wire formats: segmentation exchange documents and series blobs.

The segmentation exchange document is bit-exact and language neutral::

    {
      "format": "segmentation/v1",
      "series_id": "<series uid>",
      "grid": {"rows": .., "cols": .., "slices": ..,
               "pixel_spacing": [row, col], "slice_spacing": ..,
               "origin": [x, y, z], "col_cos": [..], "row_cos": [..]},
      "version": 2, "parent_version": 1,
      "provenance": {"source": "manual", "created_at": "..."},
      "rois": [{"number": 1, "name": "liver", "color": [255, 0, 0],
                "rle": [c0, c1, ...]}]
    }

``rle`` follows the mask codec: alternating zero-run/one-run counts, zero
run first, i-fastest voxel order.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .dicomio import ImageSeries
from .errors import GridMismatchError, ParseError
from .geometry import VolumeGrid
from .mask import ROI, Provenance, SegmentationSet, now_iso, rle_decode, rle_encode

SEGMENTATION_FORMAT = "segmentation/v1"
_SERIES_MAGIC = b"SEGSERIES1\n"


def grid_to_dict(grid: VolumeGrid) -> dict:
    return {
        "rows": grid.rows,
        "cols": grid.cols,
        "slices": grid.slices,
        "pixel_spacing": list(grid.pixel_spacing),
        "slice_spacing": grid.slice_spacing,
        "origin": list(grid.origin),
        "col_cos": list(grid.col_cos),
        "row_cos": list(grid.row_cos),
    }


def grid_from_dict(d: dict) -> VolumeGrid:
    try:
        return VolumeGrid(
            rows=int(d["rows"]), cols=int(d["cols"]), slices=int(d["slices"]),
            pixel_spacing=(float(d["pixel_spacing"][0]), float(d["pixel_spacing"][1])),
            slice_spacing=float(d["slice_spacing"]),
            origin=tuple(float(v) for v in d["origin"]),
            col_cos=tuple(float(v) for v in d["col_cos"]),
            row_cos=tuple(float(v) for v in d["row_cos"]))
    except (KeyError, TypeError, IndexError, ValueError) as exc:
        raise ParseError(f"malformed grid description: {exc}") from exc


def segmentation_to_doc(series_id: str, seg: SegmentationSet) -> dict:
    grid = seg.grid
    return {
        "format": SEGMENTATION_FORMAT,
        "series_id": series_id,
        "grid": grid_to_dict(grid) if grid else None,
        "version": seg.version,
        "parent_version": seg.parent_version,
        "provenance": {
            "source": seg.provenance.source,
            "model_id": seg.provenance.model_id,
            "model_version": seg.provenance.model_version,
            "created_at": seg.provenance.created_at,
        },
        "rois": [
            {
                "number": roi.number,
                "name": roi.name,
                "color": list(roi.color),
                "rle": list(rle_encode(mask).runs),
            }
            for roi, mask in seg.rois
        ],
    }


def segmentation_from_doc(doc: dict | str | bytes,
                          expect_grid: VolumeGrid | None = None) -> tuple[str, SegmentationSet]:
    """Decode an exchange document; optionally pin it to a known grid."""
    if isinstance(doc, (str, bytes)):
        try:
            doc = json.loads(doc)
        except json.JSONDecodeError as exc:
            raise ParseError(f"segmentation document is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ParseError("segmentation document must be a JSON object")
    if doc.get("format") != SEGMENTATION_FORMAT:
        raise ParseError(f"unknown segmentation document format {doc.get('format')!r}")
    if doc.get("grid") is None:
        raise ParseError("segmentation document carries no grid")
    grid = grid_from_dict(doc["grid"])
    if expect_grid is not None and grid != expect_grid:
        raise GridMismatchError("document grid does not match the stored series grid")

    prov_d = doc.get("provenance") or {}
    provenance = Provenance(
        source=prov_d.get("source", "manual"),
        model_id=prov_d.get("model_id"),
        model_version=prov_d.get("model_version"),
        created_at=prov_d.get("created_at") or now_iso(),
    )
    rois = []
    for entry in doc.get("rois", []):
        try:
            roi = ROI(number=int(entry["number"]), name=str(entry["name"]),
                      color=tuple(int(c) for c in entry["color"]))
            mask = rle_decode(tuple(int(c) for c in entry["rle"]), grid)
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"malformed ROI entry: {exc}") from exc
        rois.append((roi, mask))

    seg = SegmentationSet(
        series_ref=str(doc.get("series_id", "")), rois=tuple(rois),
        provenance=provenance, version=int(doc.get("version") or 0),
        parent_version=doc.get("parent_version"))
    return seg.series_ref, seg


def encode_series_blob(series: ImageSeries) -> bytes:
    """Binary store form of a series: JSON header + raw little-endian int16."""
    header = json.dumps({
        "study_id": series.study_id,
        "series_id": series.series_id,
        "modality": series.modality,
        "patient_ref": series.patient_ref,
        "grid": grid_to_dict(series.grid),
    }, sort_keys=True).encode("utf-8")
    body = np.ascontiguousarray(series.voxels, dtype="<i2").tobytes()
    return _SERIES_MAGIC + struct.pack("<I", len(header)) + header + body


def decode_series_blob(blob: bytes) -> ImageSeries:
    if not blob.startswith(_SERIES_MAGIC):
        raise ParseError("not a series blob (bad magic)")
    offset = len(_SERIES_MAGIC)
    (hlen,) = struct.unpack_from("<I", blob, offset)
    offset += 4
    header = json.loads(blob[offset:offset + hlen].decode("utf-8"))
    offset += hlen
    grid = grid_from_dict(header["grid"])
    expected = grid.voxel_count * 2
    body = blob[offset:]
    if len(body) != expected:
        raise ParseError(f"series blob body holds {len(body)} bytes; expected {expected}")
    voxels = np.frombuffer(body, dtype="<i2").reshape(grid.shape).astype(np.int16)
    return ImageSeries(
        study_id=header["study_id"], series_id=header["series_id"], grid=grid,
        voxels=voxels, modality=header["modality"], patient_ref=header["patient_ref"])
