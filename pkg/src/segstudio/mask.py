"""Dense binary voxel masks, RLE codec, and brush/sphere editing primitives.

Masks are immutable values: every edit returns a new ``VoxelMask``.  The flat
bit order is i-fastest, then j, then k — i.e. a C-ordered numpy array of
shape (slices, rows, cols) flattens to exactly the wire order.  That order is
fixed forever; the RLE exchange format and the executor label volumes both
depend on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from .errors import ArgumentError, BoundsError, CodecError
from .geometry import VolumeGrid, WorldPoint, voxel_volume, world_to_voxel


def _frozen(bits: np.ndarray) -> np.ndarray:
    bits.flags.writeable = False
    return bits


@dataclass(frozen=True, eq=False)
class VoxelMask:
    """Binary occupancy, one bit per voxel, on a specific grid."""

    grid: VolumeGrid
    bits: np.ndarray  # bool, shape (slices, rows, cols), read-only

    def __post_init__(self):
        if self.bits.dtype != np.bool_ or self.bits.shape != self.grid.shape:
            raise ArgumentError(
                f"mask bits must be bool with shape {self.grid.shape}, got {self.bits.dtype} {self.bits.shape}")
        _frozen(self.bits)

    def __eq__(self, other) -> bool:
        if not isinstance(other, VoxelMask):
            return NotImplemented
        return self.grid == other.grid and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None  # mutable payload semantics; masks are compared by value

    @property
    def voxel_count(self) -> int:
        return int(np.count_nonzero(self.bits))

    def flat(self) -> np.ndarray:
        """Bits in the canonical i-fastest wire order."""
        return self.bits.reshape(-1)

    def get(self, i: int, j: int, k: int) -> bool:
        return bool(self.bits[k, j, i])


@dataclass(frozen=True)
class ROI:
    """One named region of interest within a segmentation set."""

    number: int
    name: str
    color: tuple[int, int, int]

    def __post_init__(self):
        if self.number < 1:
            raise ArgumentError("ROI number must be a positive integer")
        if not self.name:
            raise ArgumentError("ROI name must be nonempty")
        if len(self.color) != 3 or any(not (0 <= c <= 255) for c in self.color):
            raise ArgumentError("ROI color must be three bytes")


def now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


@dataclass(frozen=True)
class Provenance:
    """Where a segmentation version came from.

    ``source`` is one of: manual, model, edited, derived (derived covers
    discrepancy sets produced by evaluation).
    """

    source: str
    model_id: str | None = None
    model_version: str | None = None
    created_at: str = field(default_factory=now_iso)

    _SOURCES = ("manual", "model", "edited", "derived")

    def __post_init__(self):
        if self.source not in self._SOURCES:
            raise ArgumentError(f"provenance source must be one of {self._SOURCES}")
        if self.source == "model" and not self.model_id:
            raise ArgumentError("model provenance requires a model_id")


@dataclass(frozen=True, eq=False)
class SegmentationSet:
    """A named, colored collection of ROI masks sharing one grid.

    ``version`` is 0 until the store assigns one; the store owns lineage.
    """

    series_ref: str
    rois: tuple[tuple[ROI, VoxelMask], ...]
    provenance: Provenance
    version: int = 0
    parent_version: int | None = None

    def __post_init__(self):
        numbers = [roi.number for roi, _ in self.rois]
        if len(set(numbers)) != len(numbers):
            raise ArgumentError("ROI numbers must be unique within a segmentation set")
        grids = {mask.grid for _, mask in self.rois}
        if len(grids) > 1:
            raise ArgumentError("all masks in a segmentation set must share one grid")
        if self.parent_version is not None and self.version and self.parent_version >= self.version:
            raise ArgumentError("version numbers must strictly increase along lineage")

    @property
    def grid(self) -> VolumeGrid | None:
        return self.rois[0][1].grid if self.rois else None

    def mask_by_name(self, name: str) -> VoxelMask | None:
        for roi, mask in self.rois:
            if roi.name == name:
                return mask
        return None

    def roi_by_number(self, number: int) -> tuple[ROI, VoxelMask] | None:
        for roi, mask in self.rois:
            if roi.number == number:
                return roi, mask
        return None


def new_mask(grid: VolumeGrid) -> VoxelMask:
    """All-clear mask on ``grid``."""
    return VoxelMask(grid, np.zeros(grid.shape, dtype=bool))


def mask_from_flat(grid: VolumeGrid, flat: np.ndarray) -> VoxelMask:
    flat = np.asarray(flat, dtype=bool)
    if flat.size != grid.voxel_count:
        raise ArgumentError(f"expected {grid.voxel_count} bits, got {flat.size}")
    return VoxelMask(grid, flat.reshape(grid.shape).copy())


def apply_brush(mask: VoxelMask, center: WorldPoint, radius: float,
                shape: str = "sphere3d", mode: str = "paint",
                slice_k: int | None = None) -> VoxelMask:
    """Paint or erase a spherical (or single-slice disk) footprint.

    A voxel is affected iff the Euclidean distance in world mm from its
    CENTER to ``center`` is <= radius (inclusive boundary, so radius 0 at an
    exact voxel center hits one voxel).  ``disk2d`` restricts to ``slice_k``
    and measures only the in-plane distance.  Voxels outside the grid are
    ignored; the input mask is never modified.
    """
    if radius < 0:
        raise ArgumentError("brush radius must be >= 0")
    if shape not in ("sphere3d", "disk2d"):
        raise ArgumentError(f"unknown brush shape {shape!r}")
    if mode not in ("paint", "erase"):
        raise ArgumentError(f"unknown brush mode {mode!r}")
    grid = mask.grid
    if shape == "disk2d":
        if slice_k is None:
            raise ArgumentError("disk2d brush requires slice_k")
        if not 0 <= slice_k < grid.slices:
            raise BoundsError(f"slice {slice_k} outside grid")

    # The frame is orthonormal, so world distance decomposes per index axis:
    # d^2 = (di*col_sp)^2 + (dj*row_sp)^2 + (dk*slice_sp)^2 around the
    # brush center's continuous index position.
    ci, cj, ck = world_to_voxel(grid, center)
    sp_row, sp_col = grid.pixel_spacing
    sp_sl = grid.slice_spacing

    i_lo = max(0, math.ceil(ci - radius / sp_col))
    i_hi = min(grid.cols - 1, math.floor(ci + radius / sp_col))
    j_lo = max(0, math.ceil(cj - radius / sp_row))
    j_hi = min(grid.rows - 1, math.floor(cj + radius / sp_row))
    if shape == "disk2d":
        k_lo = k_hi = slice_k
    else:
        k_lo = max(0, math.ceil(ck - radius / sp_sl))
        k_hi = min(grid.slices - 1, math.floor(ck + radius / sp_sl))

    bits = mask.bits.copy()
    if i_lo <= i_hi and j_lo <= j_hi and k_lo <= k_hi:
        kk, jj, ii = np.ogrid[k_lo:k_hi + 1, j_lo:j_hi + 1, i_lo:i_hi + 1]
        d2 = ((ii - ci) * sp_col) ** 2 + ((jj - cj) * sp_row) ** 2
        if shape == "sphere3d":
            d2 = d2 + ((kk - ck) * sp_sl) ** 2
        ball = d2 <= radius * radius
        region = bits[k_lo:k_hi + 1, j_lo:j_hi + 1, i_lo:i_hi + 1]
        if mode == "paint":
            region |= ball
        else:
            region &= ~ball
    return VoxelMask(grid, bits)


@dataclass(frozen=True)
class RleRuns:
    """Alternating zero-run/one-run counts, starting with a zero-run.

    Canonical form: the leading count may be 0 (mask starts with a set
    voxel); every other count is positive; counts sum to the voxel count.
    """

    runs: tuple[int, ...]

    @property
    def total(self) -> int:
        return sum(self.runs)


def rle_encode(mask: VoxelMask) -> RleRuns:
    """Canonical run-length encoding of the flat bit string."""
    flat = mask.flat()
    n = flat.size
    boundaries = np.flatnonzero(np.diff(flat.view(np.int8)))
    edges = np.concatenate(([0], boundaries + 1, [n]))
    runs = np.diff(edges).tolist()
    if flat[0]:
        runs = [0] + runs
    return RleRuns(tuple(int(r) for r in runs))


def rle_decode(runs: RleRuns | tuple[int, ...], grid: VolumeGrid) -> VoxelMask:
    """Inverse of rle_encode; rejects run totals that don't fill the grid."""
    counts = runs.runs if isinstance(runs, RleRuns) else tuple(runs)
    if any(c < 0 for c in counts):
        raise CodecError("run lengths must be non-negative")
    if any(c == 0 for c in counts[1:]):
        raise CodecError("only the leading zero-run may be empty")
    total = sum(counts)
    if total != grid.voxel_count:
        raise CodecError(f"runs cover {total} voxels, grid has {grid.voxel_count}")
    flat = np.zeros(total, dtype=bool)
    pos = 0
    value = False
    for c in counts:
        if value:
            flat[pos:pos + c] = True
        pos += c
        value = not value
    return mask_from_flat(grid, flat)


def mask_stats(mask: VoxelMask) -> dict:
    """Voxel count and physical volume of a mask."""
    count = mask.voxel_count
    return {"voxel_count": count, "volume_mm3": count * voxel_volume(mask.grid)}
