/**
 * Workflow panel controller: model dropdown, run-prediction with status
 * polling, DICE panel, export.  Holds no DOM — the view layer renders
 * from this state, tests drive it directly.
 */

import type { ApiClient } from './api.js';
import { pollJob } from './polling.js';
import type { EvaluationReport, JobSnapshot, ModelInfo } from './types.js';

export interface DiceRow {
  roiName: string;
  dice: number;
  matched: boolean;
  discrepancyVoxels: number;
}

export class WorkflowController {
  models: ModelInfo[] = [];
  selectedModelId: string | null = null;
  jobStateLog: JobSnapshot['state'][] = [];
  lastJob: JobSnapshot | null = null;
  report: EvaluationReport | null = null;

  constructor(private api: ApiClient,
              private sleep?: (ms: number) => Promise<void>) {}

  async loadModels(): Promise<ModelInfo[]> {
    this.models = (await this.api.listModels()).models;
    if (this.selectedModelId === null && this.models.length > 0) {
      this.selectedModelId = this.models[0].model_id;
    }
    return this.models;
  }

  selectModel(modelId: string): void {
    if (!this.models.some((m) => m.model_id === modelId)) {
      throw new Error(`model ${modelId} is not in the dropdown`);
    }
    this.selectedModelId = modelId;
  }

  async runPrediction(seriesId: string, intervalMs = 1000): Promise<JobSnapshot> {
    if (!this.selectedModelId) throw new Error('no model selected');
    const { job_id } = await this.api.submitJob(this.selectedModelId, seriesId);
    this.jobStateLog = [];
    const job = await pollJob(() => this.api.jobStatus(job_id), {
      intervalMs,
      onState: (state) => this.jobStateLog.push(state),
      sleep: this.sleep,
    });
    this.lastJob = job;
    return job;
  }

  async evaluate(seriesId: string, predVersion: number, gtVersion: number): Promise<EvaluationReport> {
    this.report = await this.api.evaluate(seriesId, predVersion, gtVersion);
    return this.report;
  }

  /** Rows for the DICE panel, values passed through verbatim. */
  diceRows(): DiceRow[] {
    if (!this.report) return [];
    return this.report.entries.map((e) => ({
      roiName: e.roi_name,
      dice: e.dice,
      matched: e.matched,
      discrepancyVoxels: e.discrepancy_voxels,
    }));
  }

  async exportBundle(seriesId: string, predVersion: number, correctedVersion: number,
                     gtVersion?: number): Promise<Blob> {
    return this.api.exportBundle(seriesId, predVersion, correctedVersion, gtVersion);
  }
}
