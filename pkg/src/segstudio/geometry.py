"""Volume coordinate frame: voxel indices <-> patient (world, mm) positions.

Conventions, fixed across the whole package:

* Voxel positions refer to voxel CENTERS.
* ``col_cos`` is the unit direction along which the column index ``i``
  advances, ``row_cos`` the one for the row index ``j`` (these are the two
  triples of a DICOM ImageOrientationPatient, in that order).  The slice
  normal is ``col_cos x row_cos`` and the slice index ``k`` advances along it.
* ``pixel_spacing`` is (row spacing, column spacing): the j step moves
  ``pixel_spacing[0]`` mm, the i step ``pixel_spacing[1]`` mm.
* Nearest-voxel rounding is half-away-from-zero, per axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import ArgumentError, BoundsError

Vec3 = tuple[float, float, float]

_UNIT_TOL = 1e-6
_ORTHO_TOL = 1e-6


def _cross(a: Vec3, b: Vec3) -> Vec3:
    return (
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    )


def _dot(a: Vec3, b: Vec3) -> float:
    return a[0] * b[0] + a[1] * b[1] + a[2] * b[2]


def _round_half_away(x: float) -> int:
    """Round to nearest integer, ties away from zero."""
    return math.floor(x + 0.5) if x >= 0 else math.ceil(x - 0.5)


@dataclass(frozen=True)
class WorldPoint:
    """A position in the patient frame, in mm."""

    x: float
    y: float
    z: float

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.y, self.z)):
            raise ArgumentError("world point coordinates must be finite")

    def as_tuple(self) -> Vec3:
        return (self.x, self.y, self.z)


@dataclass(frozen=True)
class VoxelIndex:
    """Integer voxel address: i = column, j = row, k = slice."""

    i: int
    j: int
    k: int


@dataclass(frozen=True)
class VolumeGrid:
    """Geometry of an image volume; the frame every mask lives in."""

    rows: int
    cols: int
    slices: int
    pixel_spacing: tuple[float, float]  # (row spacing, col spacing) mm
    slice_spacing: float
    origin: Vec3  # world position of voxel (0,0,0) center
    col_cos: Vec3  # unit direction of increasing column index i
    row_cos: Vec3  # unit direction of increasing row index j

    def __post_init__(self):
        if min(self.rows, self.cols, self.slices) < 1:
            raise ArgumentError("grid dimensions must be >= 1")
        if min(*self.pixel_spacing, self.slice_spacing) <= 0:
            raise ArgumentError("grid spacings must be > 0")
        for name, v in (("col_cos", self.col_cos), ("row_cos", self.row_cos)):
            if abs(math.sqrt(_dot(v, v)) - 1.0) > _UNIT_TOL:
                raise ArgumentError(f"{name} is not unit-norm")
        if abs(_dot(self.col_cos, self.row_cos)) > _ORTHO_TOL:
            raise ArgumentError("direction cosines are not orthogonal")

    @property
    def normal(self) -> Vec3:
        """Unit slice normal; the k step moves slice_spacing mm along it."""
        return _cross(self.col_cos, self.row_cos)

    @property
    def voxel_count(self) -> int:
        return self.rows * self.cols * self.slices

    @property
    def shape(self) -> tuple[int, int, int]:
        """numpy array shape (slices, rows, cols); i is the fastest axis."""
        return (self.slices, self.rows, self.cols)

    def contains(self, v: VoxelIndex) -> bool:
        return 0 <= v.i < self.cols and 0 <= v.j < self.rows and 0 <= v.k < self.slices


def identity_grid(rows: int, cols: int, slices: int,
                  pixel_spacing: tuple[float, float] = (1.0, 1.0),
                  slice_spacing: float = 1.0,
                  origin: Vec3 = (0.0, 0.0, 0.0)) -> VolumeGrid:
    """Axis-aligned grid: i along +x, j along +y, k along +z."""
    return VolumeGrid(rows=rows, cols=cols, slices=slices,
                      pixel_spacing=pixel_spacing, slice_spacing=slice_spacing,
                      origin=origin, col_cos=(1.0, 0.0, 0.0), row_cos=(0.0, 1.0, 0.0))


def voxel_to_world(grid: VolumeGrid, v: VoxelIndex) -> WorldPoint:
    """World position of the CENTER of voxel ``v``."""
    if not grid.contains(v):
        raise BoundsError(f"voxel ({v.i},{v.j},{v.k}) outside grid {grid.cols}x{grid.rows}x{grid.slices}")
    sp_row, sp_col = grid.pixel_spacing
    n = grid.normal
    return WorldPoint(
        grid.origin[0] + v.i * sp_col * grid.col_cos[0] + v.j * sp_row * grid.row_cos[0] + v.k * grid.slice_spacing * n[0],
        grid.origin[1] + v.i * sp_col * grid.col_cos[1] + v.j * sp_row * grid.row_cos[1] + v.k * grid.slice_spacing * n[1],
        grid.origin[2] + v.i * sp_col * grid.col_cos[2] + v.j * sp_row * grid.row_cos[2] + v.k * grid.slice_spacing * n[2],
    )


def world_to_voxel(grid: VolumeGrid, p: WorldPoint) -> tuple[float, float, float]:
    """Continuous (i, j, k) of ``p``; exact inverse of voxel_to_world.

    The orientation is orthonormal, so the inverse is a projection onto the
    three direction cosines divided by the per-axis step.
    """
    d = (p.x - grid.origin[0], p.y - grid.origin[1], p.z - grid.origin[2])
    sp_row, sp_col = grid.pixel_spacing
    return (
        _dot(d, grid.col_cos) / sp_col,
        _dot(d, grid.row_cos) / sp_row,
        _dot(d, grid.normal) / grid.slice_spacing,
    )


def nearest_voxel(grid: VolumeGrid, p: WorldPoint) -> tuple[VoxelIndex, bool]:
    """Round ``p`` to the nearest voxel (half-away-from-zero per axis).

    Returns the rounded index and whether it lies inside the grid.
    """
    ci, cj, ck = world_to_voxel(grid, p)
    v = VoxelIndex(_round_half_away(ci), _round_half_away(cj), _round_half_away(ck))
    return v, grid.contains(v)


def voxel_volume(grid: VolumeGrid) -> float:
    """Volume of one voxel in mm^3."""
    return grid.pixel_spacing[0] * grid.pixel_spacing[1] * grid.slice_spacing
