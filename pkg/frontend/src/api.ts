/**
 * Typed client for the segstudio HTTP surface.  The fetch function is
 * injectable so the whole workflow is testable against a fake server.
 */

import type {
  BrushOp, EvaluationReport, JobSnapshot, ModelInfo, SegmentationDoc, SeriesMeta,
} from './types.js';

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, public code: string, message: string) {
    super(message);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = '',
    private fetchFn: FetchLike = (url, init) => fetch(url, init),
    private token: string | null = null,
  ) {}

  private headers(extra: Record<string, string> = {}): Record<string, string> {
    const h: Record<string, string> = { ...extra };
    if (this.token) h['Authorization'] = `Bearer ${this.token}`;
    return h;
  }

  private async request(path: string, init: RequestInit = {}): Promise<Response> {
    const resp = await this.fetchFn(this.baseUrl + path, {
      ...init,
      headers: this.headers((init.headers as Record<string, string>) ?? {}),
    });
    if (!resp.ok) {
      let code = 'internal';
      let message = `${resp.status}`;
      try {
        const body = await resp.json();
        code = body.code ?? code;
        message = body.message ?? message;
      } catch {
        /* non-JSON error body */
      }
      throw new ApiError(resp.status, code, message);
    }
    return resp;
  }

  private async json<T>(path: string, init: RequestInit = {}): Promise<T> {
    return (await this.request(path, init)).json() as Promise<T>;
  }

  listStudies() {
    return this.json<{ studies: { study_id: string; series: { series_id: string }[] }[] }>('/studies');
  }

  seriesMeta(seriesId: string) {
    return this.json<SeriesMeta>(`/series/${seriesId}`);
  }

  async sliceData(seriesId: string, k: number): Promise<{ values: Int16Array; rows: number; cols: number; windowCenter: number; windowWidth: number }> {
    const resp = await this.request(`/series/${seriesId}/slices/${k}`);
    const buf = await resp.arrayBuffer();
    return {
      values: new Int16Array(buf),
      rows: Number(resp.headers.get('X-Rows')),
      cols: Number(resp.headers.get('X-Cols')),
      windowCenter: Number(resp.headers.get('X-Window-Center')),
      windowWidth: Number(resp.headers.get('X-Window-Width')),
    };
  }

  getSegmentation(seriesId: string, version: number) {
    return this.json<SegmentationDoc>(`/series/${seriesId}/segmentations/${version}`);
  }

  postSegmentation(seriesId: string, doc: SegmentationDoc) {
    return this.json<{ version: number }>(`/series/${seriesId}/segmentations`, {
      method: 'POST',
      body: JSON.stringify(doc),
      headers: { 'Content-Type': 'application/json' },
    });
  }

  postEdits(seriesId: string, version: number, ops: BrushOp[]) {
    return this.json<{ version: number; parent_version: number }>(
      `/series/${seriesId}/segmentations/${version}/edits`, {
        method: 'POST',
        body: JSON.stringify({ ops }),
        headers: { 'Content-Type': 'application/json' },
      });
  }

  listModels() {
    return this.json<{ models: ModelInfo[] }>('/models');
  }

  submitJob(modelId: string, seriesId: string, idempotencyKey?: string) {
    const headers: Record<string, string> = { 'Content-Type': 'application/json' };
    if (idempotencyKey) headers['Idempotency-Key'] = idempotencyKey;
    return this.json<{ job_id: string }>('/jobs', {
      method: 'POST',
      body: JSON.stringify({ model_id: modelId, series_id: seriesId }),
      headers,
    });
  }

  jobStatus(jobId: string) {
    return this.json<JobSnapshot>(`/jobs/${jobId}`);
  }

  evaluate(seriesId: string, predVersion: number, gtVersion: number) {
    return this.json<EvaluationReport>('/evaluate', {
      method: 'POST',
      body: JSON.stringify({ series_id: seriesId, pred_version: predVersion, gt_version: gtVersion }),
      headers: { 'Content-Type': 'application/json' },
    });
  }

  async exportBundle(seriesId: string, predVersion: number, correctedVersion: number,
                     gtVersion?: number): Promise<Blob> {
    const resp = await this.request('/export', {
      method: 'POST',
      body: JSON.stringify({
        series_id: seriesId, pred_version: predVersion,
        corrected_version: correctedVersion, gt_version: gtVersion ?? null,
      }),
      headers: { 'Content-Type': 'application/json' },
    });
    return resp.blob();
  }
}
