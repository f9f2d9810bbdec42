"""Synthetic phantom volumes with analytically known ground truth.

A phantom renders spheres and boxes into a uniform background volume
(voxel-center membership, inclusive boundaries, later shapes overwrite
earlier ones) and emits the result as real Part-10 slice files, so the
generator doubles as the round-trip oracle for the DICOM parser and for
the whole inference pipeline.

Grid values must survive the 16-character DICOM decimal-string encoding
bit-exactly; the generator rejects specs where they would not, because the
ground-truth masks have to live on the very grid the parser reconstructs.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass

import numpy as np

from .dicomio import derive_uid, format_ds, write_ct_slice
from .errors import ArgumentError
from .exchange import grid_to_dict, segmentation_to_doc
from .geometry import VolumeGrid, WorldPoint, world_to_voxel
from .mask import ROI, Provenance, SegmentationSet, VoxelMask

_PALETTE = (
    (230, 25, 75), (60, 180, 75), (0, 130, 200), (245, 130, 48),
    (145, 30, 180), (70, 240, 240), (240, 50, 230), (128, 128, 0),
)


@dataclass(frozen=True)
class Sphere:
    center: tuple[float, float, float]  # mm
    radius: float  # mm
    intensity: int
    roi_name: str


@dataclass(frozen=True)
class Box:
    corner: tuple[float, float, float]  # mm, lowest corner
    size: tuple[float, float, float]  # mm, extents along world axes
    intensity: int
    roi_name: str


@dataclass(frozen=True)
class PhantomSpec:
    label: str
    grid: VolumeGrid
    background: int = 0
    shapes: tuple[Sphere | Box, ...] = ()


@dataclass(frozen=True)
class PhantomBundle:
    files: tuple[tuple[str, bytes], ...]
    ground_truth: SegmentationSet
    manifest: dict


def _check_ds_roundtrip(values, what: str) -> None:
    for v in values:
        if float(format_ds(float(v))) != float(v):
            raise ArgumentError(
                f"{what} value {v!r} does not survive DICOM decimal encoding; "
                "use values with short decimal representations")


def _check_int16(value: int, what: str) -> None:
    if not -32768 <= int(value) <= 32767:
        raise ArgumentError(f"{what} {value} does not fit signed 16-bit")


def _voxel_center_coords(grid: VolumeGrid) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """World x/y/z of every voxel center, each shaped (slices, rows, cols)."""
    kk, jj, ii = np.ogrid[0:grid.slices, 0:grid.rows, 0:grid.cols]
    sp_row, sp_col = grid.pixel_spacing
    n = grid.normal
    coords = []
    for axis in range(3):
        coords.append(grid.origin[axis]
                      + ii * sp_col * grid.col_cos[axis]
                      + jj * sp_row * grid.row_cos[axis]
                      + kk * grid.slice_spacing * n[axis])
    return coords[0], coords[1], coords[2]


def _shape_membership(shape, x, y, z) -> np.ndarray:
    if isinstance(shape, Sphere):
        d2 = (x - shape.center[0]) ** 2 + (y - shape.center[1]) ** 2 + (z - shape.center[2]) ** 2
        return d2 <= shape.radius ** 2
    lo = shape.corner
    hi = tuple(shape.corner[a] + shape.size[a] for a in range(3))
    return ((x >= lo[0]) & (x <= hi[0]) & (y >= lo[1]) & (y <= hi[1])
            & (z >= lo[2]) & (z <= hi[2]))


def _check_extent(shape, grid: VolumeGrid) -> None:
    """Reject shapes whose physical extent leaves the volume."""
    sp_row, sp_col = grid.pixel_spacing

    def in_bounds(ci, cj, ck) -> bool:
        return (-0.5 <= ci <= grid.cols - 0.5 and -0.5 <= cj <= grid.rows - 0.5
                and -0.5 <= ck <= grid.slices - 0.5)

    if isinstance(shape, Sphere):
        if shape.radius < 0:
            raise ArgumentError("sphere radius must be >= 0")
        ci, cj, ck = world_to_voxel(grid, WorldPoint(*shape.center))
        # Exact index-space bbox of a sphere under an orthonormal frame.
        ok = (in_bounds(ci - shape.radius / sp_col, cj - shape.radius / sp_row,
                        ck - shape.radius / grid.slice_spacing)
              and in_bounds(ci + shape.radius / sp_col, cj + shape.radius / sp_row,
                            ck + shape.radius / grid.slice_spacing))
    else:
        if any(s < 0 for s in shape.size):
            raise ArgumentError("box size must be >= 0")
        lo, sz = shape.corner, shape.size
        corners = [tuple(lo[a] + sz[a] * ((m >> a) & 1) for a in range(3)) for m in range(8)]
        ok = all(in_bounds(*world_to_voxel(grid, WorldPoint(*c))) for c in corners)
    if not ok:
        raise ArgumentError(f"shape for ROI {shape.roi_name!r} lies outside the grid extent")


def render_phantom(spec: PhantomSpec) -> tuple[np.ndarray, SegmentationSet]:
    """In-memory rendering: intensity volume + ground-truth segmentation.

    Ownership follows final intensity: a voxel overwritten by a later shape
    belongs to that later shape's ROI only.
    """
    grid = spec.grid
    _check_int16(spec.background, "background intensity")
    for shape in spec.shapes:
        _check_int16(shape.intensity, "shape intensity")
        _check_extent(shape, grid)

    x, y, z = _voxel_center_coords(grid)
    volume = np.full(grid.shape, spec.background, dtype=np.int16)
    owner = np.full(grid.shape, -1, dtype=np.int32)
    for idx, shape in enumerate(spec.shapes):
        inside = _shape_membership(shape, x, y, z)
        volume[inside] = shape.intensity
        owner[inside] = idx

    roi_names = []
    for shape in spec.shapes:
        if shape.roi_name not in roi_names:
            roi_names.append(shape.roi_name)
    rois = []
    for n_idx, name in enumerate(roi_names, start=1):
        bits = np.zeros(grid.shape, dtype=bool)
        for idx, shape in enumerate(spec.shapes):
            if shape.roi_name == name:
                bits |= owner == idx
        rois.append((ROI(number=n_idx, name=name, color=_PALETTE[(n_idx - 1) % len(_PALETTE)]),
                     VoxelMask(grid, bits)))

    ground_truth = SegmentationSet(
        series_ref=derive_uid(spec.label, "series"), rois=tuple(rois),
        provenance=Provenance(source="manual"))
    return volume, ground_truth


def generate_phantom(spec: PhantomSpec) -> PhantomBundle:
    """Render the phantom and emit Part-10 files plus a manifest document."""
    grid = spec.grid
    _check_ds_roundtrip(grid.pixel_spacing, "pixel spacing")
    _check_ds_roundtrip([grid.slice_spacing], "slice spacing")
    _check_ds_roundtrip(grid.origin, "origin")
    _check_ds_roundtrip(grid.col_cos + grid.row_cos, "orientation")

    volume, ground_truth = render_phantom(spec)
    study_uid = derive_uid(spec.label, "study")
    series_uid = ground_truth.series_ref
    n = grid.normal

    files = []
    for k in range(grid.slices):
        pos = tuple(grid.origin[a] + k * grid.slice_spacing * n[a] for a in range(3))
        _check_ds_roundtrip(pos, "slice position")
        payload = write_ct_slice(
            study_uid=study_uid, series_uid=series_uid,
            sop_uid=derive_uid(spec.label, "sop", str(k)),
            instance_number=k + 1, rows=grid.rows, cols=grid.cols,
            pixel_spacing=grid.pixel_spacing, slice_thickness=grid.slice_spacing,
            position=pos, orientation=grid.col_cos + grid.row_cos,
            pixels=volume[k], patient_id=f"phantom-{spec.label}")
        files.append((f"slice-{k + 1:04d}.dcm", payload))

    manifest = {
        "format": "phantom-manifest/v1",
        "label": spec.label,
        "study_uid": study_uid,
        "series_uid": series_uid,
        "grid": grid_to_dict(grid),
        "background": spec.background,
        "shapes": [_shape_to_dict(s) for s in spec.shapes],
        "files": [{"name": name, "sha256": hashlib.sha256(data).hexdigest()}
                  for name, data in files],
        "ground_truth": segmentation_to_doc(series_uid, ground_truth),
    }
    return PhantomBundle(files=tuple(files), ground_truth=ground_truth, manifest=manifest)


def _shape_to_dict(shape) -> dict:
    if isinstance(shape, Sphere):
        return {"kind": "sphere", "center": list(shape.center), "radius": shape.radius,
                "intensity": shape.intensity, "roi_name": shape.roi_name}
    return {"kind": "box", "corner": list(shape.corner), "size": list(shape.size),
            "intensity": shape.intensity, "roi_name": shape.roi_name}


def write_phantom(spec: PhantomSpec, out_dir) -> dict:
    """Write phantom files + manifest.json into ``out_dir``; returns manifest."""
    from pathlib import Path
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    bundle = generate_phantom(spec)
    for name, data in bundle.files:
        (out / name).write_bytes(data)
    (out / "manifest.json").write_text(json.dumps(bundle.manifest, indent=2))
    return bundle.manifest
