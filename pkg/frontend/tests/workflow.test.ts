import { describe, expect, it } from 'vitest';

import { ApiClient } from '../src/api.js';
import { decodeMasks } from '../src/edits.js';
import { popcount } from '../src/rle.js';
import { WorkflowController } from '../src/workflow.js';
import { FakeServer, emptyDoc, identityGrid } from './fakeServer.js';

const noSleep = () => Promise.resolve();

function setup() {
  const grid = identityGrid(8, 8, 4);
  const server = new FakeServer(grid);
  server.registerModel({
    model_id: 'm-1', name: 'organseg', version: '1.0',
    image_ref: 'builtin:threshold', label_map: { lesion: 1 },
  });
  server.registerModel({
    model_id: 'm-2', name: 'vessels', version: '2.1',
    image_ref: 'example/vessels:2', label_map: { vessel: 1 },
  });
  const api = new ApiClient('', server.fetch);
  const workflow = new WorkflowController(api, noSleep);
  return { grid, server, api, workflow };
}

describe('workflow panel', () => {
  it('dropdown lists registered models and selects the first', async () => {
    const { workflow } = setup();
    const models = await workflow.loadModels();
    expect(models.map((m) => m.name)).toEqual(['organseg', 'vessels']);
    expect(workflow.selectedModelId).toBe('m-1');
    workflow.selectModel('m-2');
    expect(workflow.selectedModelId).toBe('m-2');
    expect(() => workflow.selectModel('m-404')).toThrow(/not in the dropdown/);
  });

  it('run-prediction observes job states in lifecycle order', async () => {
    const { server, workflow } = setup();
    server.putSegmentation(emptyDoc(server.grid, server.seriesId,
      [{ number: 1, name: 'lesion', color: [255, 0, 0] }]));
    await workflow.loadModels();
    const job = await workflow.runPrediction(server.seriesId, 0);
    expect(job.state).toBe('Completed');
    expect(workflow.jobStateLog).toEqual(
      ['Queued', 'Provisioning', 'Running', 'Postprocessing', 'Completed']);
    expect(job.result_version).not.toBeNull();
  });

  it('surfaces failed jobs with their error detail', async () => {
    const grid = identityGrid(4, 4, 2);
    const server = new FakeServer(grid, { failJobs: true });
    server.registerModel({
      model_id: 'm-bad', name: 'faulty', version: '1.0',
      image_ref: 'mock:fail', label_map: { lesion: 1 },
    });
    const workflow = new WorkflowController(new ApiClient('', server.fetch), noSleep);
    await workflow.loadModels();
    const job = await workflow.runPrediction(server.seriesId, 0);
    expect(job.state).toBe('Failed');
    expect(job.error).toBe('injected fault');
    expect(workflow.jobStateLog).toEqual(['Queued', 'Provisioning', 'Failed']);
  });

  it('DICE panel shows the report values verbatim', async () => {
    const { server, api, workflow } = setup();
    const grid = server.grid;
    const total = grid.rows * grid.cols * grid.slices;
    // v1: 4 voxels set; v2: the same 4 set, 2 of them shared plus 2 extra.
    const bitsA = new Uint8Array(total);
    const bitsB = new Uint8Array(total);
    [0, 1, 2, 3].forEach((idx) => { bitsA[idx] = 1; });
    [2, 3, 4, 5].forEach((idx) => { bitsB[idx] = 1; });
    const runsOf = (bits: Uint8Array) => {
      const runs: number[] = [];
      let cur = 0; let run = 0;
      for (const b of bits) { if ((b ? 1 : 0) === cur) run++; else { runs.push(run); cur = b ? 1 : 0; run = 1; } }
      runs.push(run);
      return runs;
    };
    const docBase = emptyDoc(grid, server.seriesId, [{ number: 1, name: 'lesion', color: [255, 0, 0] }]);
    server.putSegmentation({ ...docBase, rois: [{ ...docBase.rois[0], rle: runsOf(bitsA) }] });
    server.putSegmentation({ ...docBase, rois: [{ ...docBase.rois[0], rle: runsOf(bitsB) }] });

    const report = await workflow.evaluate(server.seriesId, 1, 2);
    const rows = workflow.diceRows();
    expect(rows).toHaveLength(1);
    expect(rows[0].roiName).toBe('lesion');
    expect(rows[0].dice).toBe(report.entries[0].dice); // verbatim, no rounding
    expect(rows[0].dice).toBe(0.5); // |A|=4 |B|=4 |A∩B|=2
    expect(rows[0].discrepancyVoxels).toBe(4);
    expect(report.mean_dice).toBe(0.5);

    // The stored discrepancy version decodes to exactly the XOR voxels.
    const disc = await api.getSegmentation(server.seriesId, report.discrepancy_version!);
    const masks = decodeMasks(disc);
    expect(popcount(masks.get(1)!)).toBe(4);
  });

  it('discrepancy of identical versions decodes to an empty overlay', async () => {
    const { server, api, workflow } = setup();
    server.putSegmentation(emptyDoc(server.grid, server.seriesId,
      [{ number: 1, name: 'lesion', color: [255, 0, 0] }]));
    server.putSegmentation(emptyDoc(server.grid, server.seriesId,
      [{ number: 1, name: 'lesion', color: [255, 0, 0] }]));
    const report = await workflow.evaluate(server.seriesId, 1, 2);
    expect(report.mean_dice).toBe(1);
    const disc = await api.getSegmentation(server.seriesId, report.discrepancy_version!);
    const masks = decodeMasks(disc);
    expect(popcount(masks.get(1)!)).toBe(0); // nothing to draw
  });
});
