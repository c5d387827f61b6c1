// End-to-end against a real local service: spawns the Python server on the
// committed fixture bundle, replays a case, and checks live grid parity plus
// what-if latency. Requires the Python package to be installed (pip install
// -e ..) — the suite fails loudly rather than silently skipping.

import { spawn, type ChildProcess } from 'node:child_process';
import { dirname, join } from 'node:path';
import { fileURLToPath } from 'node:url';
import { afterAll, beforeAll, describe, expect, it } from 'vitest';

import { ServiceClient } from '../src/api.js';
import { buildTimelineGrid, gridCells } from '../src/timeline.js';
import type { PredictionFrame, TimelineExport } from '../src/types.js';

const here = dirname(fileURLToPath(import.meta.url));
const serviceDir = join(here, 'fixtures', 'service');
const port = 8730 + Math.floor(Math.random() * 200);
const base = `http://127.0.0.1:${port}`;

let server: ChildProcess;
const client = new ServiceClient(base);

async function waitReady(timeoutMs = 30_000): Promise<void> {
  const deadline = Date.now() + timeoutMs;
  let lastError: unknown = null;
  while (Date.now() < deadline) {
    try {
      await client.catalog();
      return;
    } catch (err) {
      lastError = err;
      await new Promise((r) => setTimeout(r, 250));
    }
  }
  throw new Error(`service did not come up on ${base}: ${lastError}`);
}

beforeAll(async () => {
  server = spawn(
    'python3',
    [
      '-m', 'minutecast.cli', 'serve',
      '--corpus', join(serviceDir, 'corpus'),
      '--checkpoint', join(serviceDir, 'model.ckpt'),
      '--thresholds', join(serviceDir, 'thresholds.json'),
      '--report', join(serviceDir, 'report.json'),
      '--host', '127.0.0.1',
      '--port', String(port),
    ],
    { stdio: ['ignore', 'pipe', 'pipe'] },
  );
  server.on('error', (err) => {
    throw new Error(`failed to spawn service: ${err}`);
  });
  await waitReady();
}, 40_000);

afterAll(() => {
  server?.kill('SIGTERM');
});

describe('console against a local service', () => {
  it('live replay grid equals the offline timeline export cell for cell', async () => {
    const catalog = await client.catalog();
    const report = await client.evalReport();
    const cases = await client.cases();
    const caseInfo = cases.find((c) => report && c.minutes > 5) ?? cases[0]!;
    const timeline: TimelineExport = await client.timelineExport(caseInfo.case_id, 0.5);

    const sessionId = await client.createSession('replay', caseInfo.case_id);
    const frames: PredictionFrame[] = [];
    for (let t = 0; t < caseInfo.minutes; t += 1) {
      frames.push(await client.tick(sessionId));
    }
    const grid = buildTimelineGrid(frames, catalog.labels, timeline.activities);
    const want = timeline.minutes.flatMap((minute) =>
      timeline.activities.map((activity) => ({
        activity,
        minute: minute.minute,
        state: minute.cells[activity]!,
      })),
    );
    const got = gridCells(grid);
    const key = (c: { activity: string; minute: number; state: string }) =>
      `${c.activity}@${c.minute}:${c.state}`;
    expect(got.map(key).sort()).toEqual(want.map(key).sort());
    expect(got.length).toBe(timeline.activities.length * caseInfo.minutes);
    await client.closeSession(sessionId);
  }, 60_000);

  it('a vitals what-if edit followed by a tick updates probabilities within 200 ms', async () => {
    const cases = await client.cases();
    const caseInfo = cases.find((c) => c.minutes > 6) ?? cases[0]!;
    const sessionId = await client.createSession('replay', caseInfo.case_id);
    for (let t = 0; t < 3; t += 1) await client.tick(sessionId);
    const before = await client.tick(sessionId);

    const start = performance.now();
    const overrideId = await client.applyOverride(sessionId, {
      kind: 'vitals',
      fields: { systolic_bp: 70, oxygen_saturation: 84 },
    });
    const after = await client.tick(sessionId);
    const elapsed = performance.now() - start;

    expect(after.context.vitals?.systolic_bp).toBe(70);
    expect(after.probabilities).not.toEqual(before.probabilities);
    expect(elapsed).toBeLessThan(200);

    await client.removeOverride(sessionId, overrideId);
    await client.closeSession(sessionId);
  }, 60_000);

  it('streams frames for a following subscriber as ticks happen', async () => {
    const cases = await client.cases();
    const sessionId = await client.createSession('replay', cases[0]!.case_id);
    await client.tick(sessionId);
    await client.tick(sessionId);
    const response = await fetch(
      `${client.streamUrl(sessionId)}?follow=false`,
      { headers: { Accept: 'text/event-stream' } },
    );
    const text = await response.text();
    const minutes = [...text.matchAll(/"minute": ?(\d+)/g)].map((m) => Number(m[1]));
    expect(minutes).toEqual([0, 1]);
    expect(text).toContain('event: end');
    await client.closeSession(sessionId);
  }, 60_000);
});
