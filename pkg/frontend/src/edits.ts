/**
 * Mask editing session: optimistic local preview + authoritative server
 * round trip.  The server is always the source of truth — every stroke is
 * POSTed, the new version is fetched back, and the preview is replaced by
 * the stored bits.  A rejected stroke rolls the preview back.
 */

import type { ApiClient } from './api.js';
import { applyBrushOps } from './brush.js';
import { voxelCount } from './geometry.js';
import { rleDecode } from './rle.js';
import type { BrushOp, SegmentationDoc } from './types.js';

export function decodeMasks(doc: SegmentationDoc): Map<number, Uint8Array> {
  const count = voxelCount(doc.grid);
  const masks = new Map<number, Uint8Array>();
  for (const roi of doc.rois) {
    masks.set(roi.number, rleDecode(roi.rle, count));
  }
  return masks;
}

export class EditSession {
  doc: SegmentationDoc;
  masks: Map<number, Uint8Array>;

  constructor(private api: ApiClient, private seriesId: string, doc: SegmentationDoc) {
    this.doc = doc;
    this.masks = decodeMasks(doc);
  }

  get version(): number {
    return this.doc.version;
  }

  previewBits(roiNumber: number): Uint8Array | undefined {
    return this.masks.get(roiNumber);
  }

  /** Local preview + server POST; on rejection the preview rolls back. */
  async applyStroke(ops: BrushOp[]): Promise<number> {
    const before = new Map(this.masks);
    for (const op of ops) {
      const bits = this.masks.get(op.roi_number);
      if (bits === undefined) throw new Error(`no ROI ${op.roi_number} loaded`);
      this.masks.set(op.roi_number, applyBrushOps(bits, this.doc.grid, [op]));
    }
    try {
      const { version } = await this.api.postEdits(this.seriesId, this.doc.version, ops);
      this.doc = await this.api.getSegmentation(this.seriesId, version);
      this.masks = decodeMasks(this.doc);
      return version;
    } catch (err) {
      this.masks = before; // roll the preview back
      throw err;
    }
  }
}
