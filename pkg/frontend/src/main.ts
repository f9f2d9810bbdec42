/** Bootstrap: wires the viewer, tool controls, and workflow panel. */

import { ApiClient } from './api.js';
import { SliceViewer } from './viewer.js';
import { WorkflowController } from './workflow.js';

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing #${id}`);
  return node as T;
}

function setStatus(text: string, isError = false): void {
  const banner = el<HTMLDivElement>('status');
  banner.textContent = text;
  banner.className = isError ? 'status error' : 'status';
}

async function refreshSeriesList(api: ApiClient, select: HTMLSelectElement): Promise<void> {
  const { studies } = await api.listStudies();
  select.innerHTML = '';
  for (const study of studies) {
    for (const series of study.series) {
      const option = document.createElement('option');
      option.value = series.series_id;
      option.textContent = series.series_id;
      select.appendChild(option);
    }
  }
}

async function refreshVersions(api: ApiClient, seriesId: string,
                               select: HTMLSelectElement): Promise<void> {
  const meta = await api.seriesMeta(seriesId);
  select.innerHTML = '';
  for (const v of meta.segmentations) {
    const option = document.createElement('option');
    option.value = String(v.version);
    option.textContent = `v${v.version} (${v.provenance?.source ?? '?'}: ${v.roi_names.join(', ')})`;
    select.appendChild(option);
  }
}

function renderDicePanel(workflow: WorkflowController): void {
  const tbody = el<HTMLTableSectionElement>('dice-body');
  tbody.innerHTML = '';
  for (const row of workflow.diceRows()) {
    const tr = document.createElement('tr');
    tr.innerHTML = `<td>${row.roiName}</td><td>${row.dice}</td>`
      + `<td>${row.matched ? 'yes' : 'no'}</td><td>${row.discrepancyVoxels}</td>`;
    tbody.appendChild(tr);
  }
  const mean = workflow.report?.mean_dice;
  el<HTMLSpanElement>('mean-dice').textContent = mean === undefined ? '-' : String(mean);
}

async function boot(): Promise<void> {
  const api = new ApiClient('');
  const viewer = new SliceViewer(el<HTMLCanvasElement>('slice-canvas'), api);
  const workflow = new WorkflowController(api);
  viewer.onStatus = setStatus;

  const seriesSelect = el<HTMLSelectElement>('series-select');
  const versionSelect = el<HTMLSelectElement>('version-select');
  viewer.onVersionChange = () => void refreshVersions(api, seriesSelect.value, versionSelect);

  await refreshSeriesList(api, seriesSelect);
  el<HTMLButtonElement>('load-series').addEventListener('click', async () => {
    await viewer.loadSeries(seriesSelect.value);
    await refreshVersions(api, seriesSelect.value, versionSelect);
  });
  el<HTMLButtonElement>('load-version').addEventListener('click', async () => {
    if (versionSelect.value) await viewer.loadVersion(Number(versionSelect.value));
  });

  // Tool controls.
  const radius = el<HTMLInputElement>('tool-radius');
  radius.addEventListener('input', () => {
    viewer.state.tool.radiusMm = Number(radius.value);
    el<HTMLSpanElement>('tool-radius-label').textContent = `${radius.value} mm`;
  });
  for (const kind of ['brush', 'sphere', 'eraser'] as const) {
    el<HTMLInputElement>(`tool-${kind}`).addEventListener('change', () => {
      viewer.state.tool.kind = kind;
    });
  }
  el<HTMLInputElement>('overlay-opacity').addEventListener('input', (ev) => {
    const value = Number((ev.target as HTMLInputElement).value);
    for (const key of viewer.state.roiOpacity.keys()) viewer.state.roiOpacity.set(key, value);
    void viewer.redraw();
  });

  // Workflow panel.
  const modelSelect = el<HTMLSelectElement>('model-select');
  await workflow.loadModels();
  for (const model of workflow.models) {
    const option = document.createElement('option');
    option.value = model.model_id;
    option.textContent = `${model.name} ${model.version}`;
    modelSelect.appendChild(option);
  }
  modelSelect.addEventListener('change', () => workflow.selectModel(modelSelect.value));

  el<HTMLButtonElement>('run-prediction').addEventListener('click', async () => {
    try {
      const job = await workflow.runPrediction(seriesSelect.value, 1000);
      setStatus(`job ${job.state}${job.error ? `: ${job.error}` : ''}`, job.state === 'Failed');
      await refreshVersions(api, seriesSelect.value, versionSelect);
      if (job.result_version !== null) await viewer.loadVersion(job.result_version);
    } catch (err) {
      setStatus(String(err), true);
    }
  });
  el<HTMLButtonElement>('job-progress').textContent = '';

  el<HTMLButtonElement>('run-evaluate').addEventListener('click', async () => {
    const pred = Number(el<HTMLInputElement>('eval-pred').value);
    const gt = Number(el<HTMLInputElement>('eval-gt').value);
    try {
      const report = await workflow.evaluate(seriesSelect.value, pred, gt);
      renderDicePanel(workflow);
      if (report.discrepancy_version !== undefined) {
        el<HTMLInputElement>('discrepancy-version').value = String(report.discrepancy_version);
      }
    } catch (err) {
      setStatus(String(err), true);
    }
  });

  el<HTMLInputElement>('discrepancy-toggle').addEventListener('change', async (ev) => {
    const checked = (ev.target as HTMLInputElement).checked;
    const version = Number(el<HTMLInputElement>('discrepancy-version').value);
    await viewer.loadDiscrepancy(checked && version ? version : null);
  });

  el<HTMLButtonElement>('run-export').addEventListener('click', async () => {
    const pred = Number(el<HTMLInputElement>('eval-pred').value);
    const corrected = viewer.session?.version ?? pred;
    const gt = Number(el<HTMLInputElement>('eval-gt').value);
    try {
      const blob = await workflow.exportBundle(seriesSelect.value, pred, corrected, gt || undefined);
      const url = URL.createObjectURL(blob);
      const a = document.createElement('a');
      a.href = url;
      a.download = `bundle-${seriesSelect.value}.zip`;
      a.click();
      URL.revokeObjectURL(url);
    } catch (err) {
      setStatus(String(err), true);
    }
  });

  setStatus('ready');
}

document.addEventListener('DOMContentLoaded', () => {
  boot().catch((err) => setStatus(String(err), true));
});
