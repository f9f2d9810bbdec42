/**
 * Canvas slice viewer: windowed grayscale, ROI overlays, discrepancy
 * layer, and brush interaction.  All pixel math lives in render.ts /
 * brush.ts; this class only wires the DOM.
 */

import type { ApiClient } from './api.js';
import { EditSession, decodeMasks } from './edits.js';
import { voxelToWorld } from './geometry.js';
import { compositeSlice, grayToRgba, sliceOfMask, windowToGray, type OverlaySpec } from './render.js';
import type { BrushOp, SegmentationDoc, SeriesMeta, ViewportState } from './types.js';

const DISCREPANCY_COLOR: [number, number, number] = [255, 255, 0];

export class SliceViewer {
  state: ViewportState = {
    sliceIndex: 0,
    windowCenter: 0,
    windowWidth: 1,
    roiVisibility: new Map(),
    roiOpacity: new Map(),
    tool: { kind: 'brush', radiusMm: 2.0 },
    discrepancyOverlay: false,
  };

  meta: SeriesMeta | null = null;
  session: EditSession | null = null;
  discrepancyDoc: SegmentationDoc | null = null;
  private sliceCache = new Map<number, Int16Array>();
  onStatus: (text: string, isError?: boolean) => void = () => {};
  onVersionChange: (version: number) => void = () => {};

  constructor(private canvas: HTMLCanvasElement, private api: ApiClient) {
    canvas.addEventListener('click', (ev) => void this.handleClick(ev));
    canvas.addEventListener('wheel', (ev) => {
      ev.preventDefault();
      this.stepSlice(ev.deltaY > 0 ? 1 : -1);
    });
  }

  async loadSeries(seriesId: string): Promise<void> {
    this.meta = await this.api.seriesMeta(seriesId);
    this.sliceCache.clear();
    this.session = null;
    this.discrepancyDoc = null;
    const [lo, hi] = this.meta.intensity_range;
    this.state.windowCenter = (lo + hi) / 2;
    this.state.windowWidth = Math.max(hi - lo, 1);
    this.state.sliceIndex = Math.floor(this.meta.grid.slices / 2);
    await this.redraw();
  }

  async loadVersion(version: number): Promise<void> {
    if (!this.meta) return;
    const doc = await this.api.getSegmentation(this.meta.series_id, version);
    this.session = new EditSession(this.api, this.meta.series_id, doc);
    for (const roi of doc.rois) {
      if (!this.state.roiVisibility.has(roi.number)) this.state.roiVisibility.set(roi.number, true);
      if (!this.state.roiOpacity.has(roi.number)) this.state.roiOpacity.set(roi.number, 0.45);
    }
    this.onVersionChange(doc.version);
    await this.redraw();
  }

  async loadDiscrepancy(version: number | null): Promise<void> {
    if (!this.meta) return;
    this.discrepancyDoc = version === null
      ? null
      : await this.api.getSegmentation(this.meta.series_id, version);
    this.state.discrepancyOverlay = version !== null;
    await this.redraw();
  }

  stepSlice(delta: number): void {
    if (!this.meta) return;
    const next = Math.min(Math.max(this.state.sliceIndex + delta, 0), this.meta.grid.slices - 1);
    if (next !== this.state.sliceIndex) {
      this.state.sliceIndex = next;
      void this.redraw();
    }
  }

  private async sliceValues(k: number): Promise<Int16Array> {
    const cached = this.sliceCache.get(k);
    if (cached) return cached;
    if (!this.meta) throw new Error('no series loaded');
    const data = await this.api.sliceData(this.meta.series_id, k);
    this.sliceCache.set(k, data.values);
    return data.values;
  }

  private overlays(k: number): OverlaySpec[] {
    const specs: OverlaySpec[] = [];
    const grid = this.meta!.grid;
    if (this.session) {
      for (const roi of this.session.doc.rois) {
        if (!this.state.roiVisibility.get(roi.number)) continue;
        const opacity = this.state.roiOpacity.get(roi.number) ?? 0.45;
        const bits = this.session.previewBits(roi.number);
        if (!bits) continue;
        specs.push({ bits: sliceOfMask(bits, grid.rows, grid.cols, k), color: roi.color, opacity });
      }
    }
    if (this.state.discrepancyOverlay && this.discrepancyDoc) {
      for (const [, bits] of decodeMasks(this.discrepancyDoc)) {
        specs.push({
          bits: sliceOfMask(bits, grid.rows, grid.cols, k),
          color: DISCREPANCY_COLOR,
          opacity: 0.7,
        });
      }
    }
    return specs;
  }

  async redraw(): Promise<void> {
    if (!this.meta) return;
    const grid = this.meta.grid;
    const k = this.state.sliceIndex;
    try {
      const values = await this.sliceValues(k);
      const gray = windowToGray(values, this.state.windowCenter, this.state.windowWidth);
      const rgba = compositeSlice(grayToRgba(gray), this.overlays(k));
      this.canvas.width = grid.cols;
      this.canvas.height = grid.rows;
      const ctx = this.canvas.getContext('2d')!;
      const pixels = new Uint8ClampedArray(rgba); // pin a non-shared backing buffer
      ctx.putImageData(new ImageData(pixels, grid.cols, grid.rows), 0, 0);
      this.onStatus(`slice ${k + 1}/${grid.slices}`);
    } catch (err) {
      this.onStatus(`failed to render slice: ${String(err)}`, true);
    }
  }

  /** Canvas click -> world-space brush op -> server round trip. */
  private async handleClick(ev: MouseEvent): Promise<void> {
    if (!this.meta || !this.session) return;
    const grid = this.meta.grid;
    const rect = this.canvas.getBoundingClientRect();
    const i = Math.floor(((ev.clientX - rect.left) / rect.width) * grid.cols);
    const j = Math.floor(((ev.clientY - rect.top) / rect.height) * grid.rows);
    if (i < 0 || i >= grid.cols || j < 0 || j >= grid.rows) return;
    const activeRoi = this.session.doc.rois[0];
    if (!activeRoi) return;

    const { kind, radiusMm } = this.state.tool;
    const op: BrushOp = {
      roi_number: activeRoi.number,
      center: voxelToWorld(grid, i, j, this.state.sliceIndex),
      radius: radiusMm,
      shape: kind === 'sphere' ? 'sphere3d' : 'disk2d',
      mode: kind === 'eraser' ? 'erase' : 'paint',
      slice: kind === 'sphere' ? undefined : this.state.sliceIndex,
    };
    await this.redraw(); // local preview happens inside applyStroke below
    try {
      const version = await this.session.applyStroke([op]);
      this.onVersionChange(version);
      await this.redraw();
    } catch (err) {
      await this.redraw(); // preview rolled back
      this.onStatus(`edit rejected: ${String(err)}`, true);
    }
  }
}
