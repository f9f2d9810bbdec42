/** Job polling: wait for a terminal state, reporting each state change. */

import type { JobSnapshot } from './types.js';

const TERMINAL = new Set(['Completed', 'Failed']);

export interface PollOptions {
  intervalMs?: number;
  timeoutMs?: number;
  onState?: (state: JobSnapshot['state']) => void;
  sleep?: (ms: number) => Promise<void>;
}

const defaultSleep = (ms: number) => new Promise<void>((resolve) => setTimeout(resolve, ms));

export async function pollJob(
  fetchJob: () => Promise<JobSnapshot>,
  options: PollOptions = {},
): Promise<JobSnapshot> {
  const interval = options.intervalMs ?? 1000;
  const timeout = options.timeoutMs ?? 10 * 60 * 1000;
  const sleep = options.sleep ?? defaultSleep;
  const started = Date.now();
  let lastState: string | null = null;
  for (;;) {
    const job = await fetchJob();
    if (job.state !== lastState) {
      lastState = job.state;
      options.onState?.(job.state);
    }
    if (TERMINAL.has(job.state)) return job;
    if (Date.now() - started > timeout) {
      throw new Error(`job ${job.job_id} still ${job.state} after ${timeout} ms`);
    }
    await sleep(interval);
  }
}
