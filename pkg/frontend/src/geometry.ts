/** Voxel <-> world transforms for a grid document (orthonormal frame). */

import type { GridDoc } from './types.js';

export type Vec3 = [number, number, number];

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export function gridNormal(grid: GridDoc): Vec3 {
  return cross(grid.col_cos, grid.row_cos);
}

export function voxelCount(grid: GridDoc): number {
  return grid.rows * grid.cols * grid.slices;
}

/** Flat index in the wire order (i fastest, then j, then k). */
export function flatIndex(grid: GridDoc, i: number, j: number, k: number): number {
  return i + grid.cols * (j + grid.rows * k);
}

/** World position of the CENTER of voxel (i, j, k). */
export function voxelToWorld(grid: GridDoc, i: number, j: number, k: number): Vec3 {
  const [spRow, spCol] = grid.pixel_spacing;
  const n = gridNormal(grid);
  const out: Vec3 = [0, 0, 0];
  for (let axis = 0; axis < 3; axis++) {
    out[axis] = grid.origin[axis]
      + i * spCol * grid.col_cos[axis]
      + j * spRow * grid.row_cos[axis]
      + k * grid.slice_spacing * n[axis];
  }
  return out;
}

/** Continuous (i, j, k) of a world point; inverse of voxelToWorld. */
export function worldToVoxel(grid: GridDoc, p: Vec3): Vec3 {
  const d: Vec3 = [p[0] - grid.origin[0], p[1] - grid.origin[1], p[2] - grid.origin[2]];
  const [spRow, spCol] = grid.pixel_spacing;
  return [
    dot(d, grid.col_cos) / spCol,
    dot(d, grid.row_cos) / spRow,
    dot(d, gridNormal(grid)) / grid.slice_spacing,
  ];
}
