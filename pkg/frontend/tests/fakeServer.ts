/**
 * In-memory fake of the segstudio API for offline tests.
 *
 * Brush semantics are implemented INDEPENDENTLY of src/brush.ts: a full
 * volume scan computing each voxel center's world position from first
 * principles and testing Euclidean distance.  The client preview must
 * agree with this authoritative route bit-for-bit.
 */

import type { BrushOp, GridDoc, JobSnapshot, ModelInfo, SegmentationDoc } from '../src/types.js';
import type { FetchLike } from '../src/api.js';

function json(body: unknown, status = 200): Response {
  return new Response(JSON.stringify(body), {
    status,
    headers: { 'Content-Type': 'application/json' },
  });
}

function error(status: number, code: string, message: string): Response {
  return json({ code, message, detail: null }, status);
}

function decodeRuns(runs: number[], total: number): Uint8Array {
  const bits = new Uint8Array(total);
  let pos = 0;
  let value = 0;
  for (const c of runs) {
    if (value) bits.fill(1, pos, pos + c);
    pos += c;
    value ^= 1;
  }
  return bits;
}

function encodeRuns(bits: Uint8Array): number[] {
  const runs: number[] = [];
  let current = 0;
  let run = 0;
  for (const bit of bits) {
    const b = bit ? 1 : 0;
    if (b === current) run += 1;
    else {
      runs.push(run);
      current = b;
      run = 1;
    }
  }
  runs.push(run);
  return runs;
}

/** Authoritative brush: full scan, world-space distance, inclusive boundary. */
function serverApplyBrush(bits: Uint8Array, grid: GridDoc, op: BrushOp): void {
  const [spRow, spCol] = grid.pixel_spacing;
  const cc = grid.col_cos;
  const rc = grid.row_cos;
  const n: [number, number, number] = [
    cc[1] * rc[2] - cc[2] * rc[1],
    cc[2] * rc[0] - cc[0] * rc[2],
    cc[0] * rc[1] - cc[1] * rc[0],
  ];
  let idx = 0;
  for (let k = 0; k < grid.slices; k++) {
    for (let j = 0; j < grid.rows; j++) {
      for (let i = 0; i < grid.cols; i++, idx++) {
        if (op.shape === 'disk2d' && k !== op.slice) continue;
        const wx = grid.origin[0] + i * spCol * cc[0] + j * spRow * rc[0] + k * grid.slice_spacing * n[0];
        const wy = grid.origin[1] + i * spCol * cc[1] + j * spRow * rc[1] + k * grid.slice_spacing * n[1];
        const wz = grid.origin[2] + i * spCol * cc[2] + j * spRow * rc[2] + k * grid.slice_spacing * n[2];
        let dx = wx - op.center[0];
        let dy = wy - op.center[1];
        let dz = wz - op.center[2];
        if (op.shape === 'disk2d') {
          // in-plane distance: remove the normal component
          const along = dx * n[0] + dy * n[1] + dz * n[2];
          dx -= along * n[0];
          dy -= along * n[1];
          dz -= along * n[2];
        }
        if (dx * dx + dy * dy + dz * dz <= op.radius * op.radius) {
          bits[idx] = op.mode === 'paint' ? 1 : 0;
        }
      }
    }
  }
}

export interface FakeServerOptions {
  failJobs?: boolean;
  jobStates?: JobSnapshot['state'][];
}

export class FakeServer {
  grid: GridDoc;
  seriesId = 'series-test';
  models: ModelInfo[] = [];
  versions = new Map<number, SegmentationDoc>();
  jobs = new Map<string, { states: JobSnapshot['state'][]; cursor: number; resultVersion: number | null }>();
  private nextVersion = 1;
  private nextJob = 1;

  constructor(grid: GridDoc, options: FakeServerOptions = {}) {
    this.grid = grid;
    this.options = options;
  }

  private options: FakeServerOptions;

  registerModel(model: ModelInfo): void {
    this.models.push(model);
  }

  putSegmentation(doc: Omit<SegmentationDoc, 'version'>): number {
    const version = this.nextVersion++;
    this.versions.set(version, { ...doc, version } as SegmentationDoc);
    return version;
  }

  maskBits(version: number, roiNumber: number): Uint8Array {
    const doc = this.versions.get(version)!;
    const roi = doc.rois.find((r) => r.number === roiNumber)!;
    const total = this.grid.rows * this.grid.cols * this.grid.slices;
    return decodeRuns(roi.rle, total);
  }

  readonly fetch: FetchLike = async (url, init) => {
    const method = init?.method ?? 'GET';
    const body = init?.body ? JSON.parse(init.body as string) : null;
    const path = url.replace(/^https?:\/\/[^/]+/, '');

    if (path === '/models' && method === 'GET') return json({ models: this.models });

    if (path === '/jobs' && method === 'POST') {
      const jobId = `j-${this.nextJob++}`;
      const states = this.options.jobStates
        ?? (this.options.failJobs
          ? ['Queued', 'Provisioning', 'Failed'] as const
          : ['Queued', 'Provisioning', 'Running', 'Postprocessing', 'Completed'] as const);
      // A completed job stores a copy of version 1 as its prediction.
      const base = this.versions.get(1);
      let resultVersion: number | null = null;
      if (base && states[states.length - 1] === 'Completed') {
        resultVersion = this.putSegmentation({
          ...base,
          parent_version: null,
          provenance: { source: 'model', model_id: body.model_id },
        });
      }
      this.jobs.set(jobId, { states: [...states], cursor: 0, resultVersion });
      return json({ job_id: jobId }, 202);
    }

    const jobMatch = path.match(/^\/jobs\/(.+)$/);
    if (jobMatch && method === 'GET') {
      const job = this.jobs.get(jobMatch[1]);
      if (!job) return error(404, 'not_found', 'unknown job');
      const state = job.states[Math.min(job.cursor, job.states.length - 1)];
      job.cursor += 1;
      const terminal = state === 'Completed' || state === 'Failed';
      return json({
        job_id: jobMatch[1],
        state,
        result_version: terminal && state === 'Completed' ? job.resultVersion : null,
        error: state === 'Failed' ? 'injected fault' : null,
        transitions: [],
      });
    }

    const segMatch = path.match(/^\/series\/([^/]+)\/segmentations\/(\d+)$/);
    if (segMatch && method === 'GET') {
      const doc = this.versions.get(Number(segMatch[2]));
      if (!doc) return error(404, 'not_found', 'unknown version');
      return json(doc);
    }

    const editsMatch = path.match(/^\/series\/([^/]+)\/segmentations\/(\d+)\/edits$/);
    if (editsMatch && method === 'POST') {
      const parent = this.versions.get(Number(editsMatch[2]));
      if (!parent) return error(404, 'not_found', 'unknown version');
      const total = this.grid.rows * this.grid.cols * this.grid.slices;
      const masks = new Map(parent.rois.map((r) => [r.number, decodeRuns(r.rle, total)]));
      for (const op of body.ops as BrushOp[]) {
        const bits = masks.get(op.roi_number);
        if (!bits) return error(404, 'not_found', `no ROI ${op.roi_number}`);
        if (op.radius < 0) return error(400, 'bad_argument', 'negative radius');
        serverApplyBrush(bits, this.grid, op);
      }
      const version = this.putSegmentation({
        ...parent,
        parent_version: parent.version,
        provenance: { source: 'edited' },
        rois: parent.rois.map((r) => ({ ...r, rle: encodeRuns(masks.get(r.number)!) })),
      });
      return json({ version, parent_version: parent.version }, 201);
    }

    if (path === '/evaluate' && method === 'POST') {
      const pred = this.versions.get(body.pred_version);
      const gt = this.versions.get(body.gt_version);
      if (!pred || !gt) return error(404, 'not_found', 'unknown version');
      const total = this.grid.rows * this.grid.cols * this.grid.slices;
      const entries = [];
      const xorRois = [];
      for (const roi of pred.rois) {
        const a = decodeRuns(roi.rle, total);
        const gtRoi = gt.rois.find((r) => r.name === roi.name);
        const b = gtRoi ? decodeRuns(gtRoi.rle, total) : new Uint8Array(total);
        let na = 0;
        let nb = 0;
        let ni = 0;
        const xorBits = new Uint8Array(total);
        for (let idx = 0; idx < total; idx++) {
          na += a[idx];
          nb += b[idx];
          ni += a[idx] & b[idx];
          xorBits[idx] = a[idx] ^ b[idx];
        }
        entries.push({
          roi_name: roi.name,
          dice: na + nb === 0 ? 1.0 : (2 * ni) / (na + nb),
          empty_pair: na + nb === 0,
          pred_voxels: na,
          gt_voxels: nb,
          intersection_voxels: ni,
          discrepancy_voxels: na + nb - 2 * ni,
          matched: Boolean(gtRoi),
        });
        xorRois.push({
          number: xorRois.length + 1,
          name: `${roi.name}-discrepancy`,
          color: [255, 255, 0] as [number, number, number],
          rle: encodeRuns(xorBits),
        });
      }
      const discVersion = this.putSegmentation({
        ...pred,
        parent_version: null,
        provenance: { source: 'derived' },
        rois: xorRois,
      });
      const matched = entries.filter((e) => e.matched);
      return json({
        mean_dice: matched.length ? matched.reduce((s, e) => s + e.dice, 0) / matched.length : 0,
        matched_count: matched.length,
        unmatched_count: entries.length - matched.length,
        entries,
        discrepancy_version: discVersion,
        report_id: 'report-0001',
      });
    }

    return error(404, 'not_found', `no fake route for ${method} ${path}`);
  };
}

export function identityGrid(rows: number, cols: number, slices: number): GridDoc {
  return {
    rows, cols, slices,
    pixel_spacing: [1.0, 1.0],
    slice_spacing: 1.0,
    origin: [0, 0, 0],
    col_cos: [1, 0, 0],
    row_cos: [0, 1, 0],
  };
}

export function emptyDoc(grid: GridDoc, seriesId: string,
                         rois: { number: number; name: string; color: [number, number, number] }[])
  : Omit<SegmentationDoc, 'version'> {
  const total = grid.rows * grid.cols * grid.slices;
  return {
    format: 'segmentation/v1',
    series_id: seriesId,
    grid,
    parent_version: null,
    provenance: { source: 'manual' },
    rois: rois.map((r) => ({ ...r, rle: [total] })),
  };
}
