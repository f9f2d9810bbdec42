/**
 * Client-side brush preview with the exact server geometry: a voxel is
 * affected iff the world-mm distance from its CENTER to the brush center
 * is <= radius (inclusive), measured in-plane only for disk2d.  Keeping
 * this formula in lockstep with the server guarantees preview == stored
 * mask for the same operations.
 */

import { worldToVoxel } from './geometry.js';
import type { BrushOp, GridDoc } from './types.js';

/** Apply one brush operation to a flat bit mask, in place. */
export function applyBrushOp(bits: Uint8Array, grid: GridDoc, op: BrushOp): void {
  if (op.radius < 0) throw new Error('brush radius must be >= 0');
  const [ci, cj, ck] = worldToVoxel(grid, op.center);
  const [spRow, spCol] = grid.pixel_spacing;
  const spSl = grid.slice_spacing;
  const r = op.radius;

  const iLo = Math.max(0, Math.ceil(ci - r / spCol));
  const iHi = Math.min(grid.cols - 1, Math.floor(ci + r / spCol));
  const jLo = Math.max(0, Math.ceil(cj - r / spRow));
  const jHi = Math.min(grid.rows - 1, Math.floor(cj + r / spRow));
  let kLo: number;
  let kHi: number;
  if (op.shape === 'disk2d') {
    if (op.slice === undefined) throw new Error('disk2d needs a slice index');
    kLo = kHi = op.slice;
  } else {
    kLo = Math.max(0, Math.ceil(ck - r / spSl));
    kHi = Math.min(grid.slices - 1, Math.floor(ck + r / spSl));
  }

  const r2 = r * r;
  const paint = op.mode === 'paint' ? 1 : 0;
  for (let k = kLo; k <= kHi; k++) {
    const dk2 = op.shape === 'disk2d' ? 0 : ((k - ck) * spSl) ** 2;
    for (let j = jLo; j <= jHi; j++) {
      const dj2 = ((j - cj) * spRow) ** 2;
      const rowBase = grid.cols * (j + grid.rows * k);
      for (let i = iLo; i <= iHi; i++) {
        const d2 = ((i - ci) * spCol) ** 2 + dj2 + dk2;
        if (d2 <= r2) bits[rowBase + i] = paint;
      }
    }
  }
}

export function applyBrushOps(bits: Uint8Array, grid: GridDoc, ops: BrushOp[]): Uint8Array {
  const out = bits.slice();
  for (const op of ops) applyBrushOp(out, grid, op);
  return out;
}
