// Console wiring: session controls, live timeline grid, and the what-if
// panel. All rendered state comes from service-acknowledged frames.

import { ServiceClient } from './api.js';
import { readSse } from './sse.js';
import { buildTimelineGrid, filterActivities } from './timeline.js';
import type { CaseInfo, CatalogInfo, OverrideRequest, PredictionFrame } from './types.js';
import {
  WhatIfState,
  acknowledgeOverride,
  beginRemove,
  confirmRemoved,
  describeOverride,
  emptyWhatIf,
  rejectOverride,
  submitOverride,
} from './whatif.js';

const client = new ServiceClient('');

interface AppState {
  catalog: CatalogInfo | null;
  cases: CaseInfo[];
  f1ByLabel: Map<string, number>;
  cutoff: number;
  sessionId: string | null;
  caseId: string | null;
  caseMinutes: number;
  frames: PredictionFrame[];
  whatIf: WhatIfState;
  playTimer: number | null;
  streamAbort: AbortController | null;
  status: string;
}

const state: AppState = {
  catalog: null,
  cases: [],
  f1ByLabel: new Map(),
  cutoff: 0.5,
  sessionId: null,
  caseId: null,
  caseMinutes: 0,
  frames: [],
  whatIf: emptyWhatIf(),
  playTimer: null,
  streamAbort: null,
  status: 'connecting…',
};

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function setStatus(text: string) {
  state.status = text;
  el('status').textContent = text;
}

// ---- rendering ------------------------------------------------------------

function renderGrid() {
  const host = el('timeline');
  if (!state.catalog || state.frames.length === 0) {
    host.innerHTML = '<p class="placeholder">No frames yet — start a session and step.</p>';
    return;
  }
  const activities = filterActivities(state.catalog.labels, state.f1ByLabel, state.cutoff);
  const grid = buildTimelineGrid(state.frames, state.catalog.labels, activities);
  const rows: string[] = [];
  const header = grid.minutes.map((m) => `<th>${m}</th>`).join('');
  rows.push(`<tr><th class="rowname">activity \\ minute</th>${header}</tr>`);
  for (const activity of grid.activities) {
    const cells = grid.cells.get(activity) ?? [];
    const tds = cells
      .map((cell) => {
        const tip = `p=${cell.probability.toFixed(3)} τ=${cell.threshold.toFixed(3)}`;
        return `<td class="cell ${cell.state.toLowerCase()}" title="${tip}"></td>`;
      })
      .join('');
    rows.push(`<tr><th class="rowname">${activity}</th>${tds}</tr>`);
  }
  host.innerHTML = `<table class="grid">${rows.join('')}</table>`;
}

function renderFramePanel() {
  const host = el('frame-panel');
  const frame = state.frames[state.frames.length - 1];
  if (!frame || !state.catalog) {
    host.innerHTML = '<p class="placeholder">No prediction yet.</p>';
    return;
  }
  const labels = state.catalog.labels;
  const ranked = labels
    .map((name, i) => ({
      name,
      p: frame.probabilities[i] ?? 0,
      tau: frame.thresholds[i] ?? 1,
    }))
    .sort((a, b) => b.p - a.p)
    .slice(0, 12);
  const rows = ranked
    .map((r) => {
      const on = r.p >= r.tau ? 'on' : '';
      return `<tr class="${on}"><td>${r.name}</td><td>${r.p.toFixed(3)}</td><td>${r.tau.toFixed(3)}</td></tr>`;
    })
    .join('');
  const lastK = frame.context.last_k.length ? frame.context.last_k.join(', ') : '(none)';
  const vitals = frame.context.vitals
    ? Object.entries(frame.context.vitals)
        .map(([k, v]) => `${k}: ${v ?? '–'}`)
        .join('<br>')
    : '(no vitals yet)';
  host.innerHTML = `
    <h3>minute ${frame.minute}</h3>
    <table class="probs"><tr><th>activity</th><th>p</th><th>τ</th></tr>${rows}</table>
    <h4>last-k context</h4><p>${lastK}</p>
    <h4>carried vitals</h4><p>${vitals}</p>`;
}

function renderWhatIf() {
  const host = el('override-list');
  if (state.whatIf.overrides.length === 0) {
    host.innerHTML = '<p class="placeholder">No overrides.</p>';
    return;
  }
  host.innerHTML = state.whatIf.overrides
    .map((o) => {
      const label = describeOverride(o.request);
      const badge = `<span class="badge ${o.status}">${o.status}</span>`;
      const button =
        o.status === 'applied'
          ? `<button data-remove="${o.overrideId}">remove</button>`
          : '';
      return `<div class="override">${badge} ${label} ${button}</div>`;
    })
    .join('');
  host.querySelectorAll('button[data-remove]').forEach((button) => {
    button.addEventListener('click', () => {
      const id = (button as HTMLButtonElement).dataset.remove!;
      void removeOverride(id);
    });
  });
}

function renderAll() {
  renderGrid();
  renderFramePanel();
  renderWhatIf();
  el<HTMLButtonElement>('btn-step').toggleAttribute('disabled', !state.sessionId);
  el<HTMLButtonElement>('btn-play').toggleAttribute('disabled', !state.sessionId);
  el<HTMLButtonElement>('btn-pause').toggleAttribute('disabled', state.playTimer === null);
}

// ---- session lifecycle ----------------------------------------------------

function applyFrame(frame: PredictionFrame) {
  // frames arrive in minute order via the stream; ignore duplicates
  if (state.frames.some((f) => f.minute === frame.minute)) return;
  state.frames.push(frame);
  state.frames.sort((a, b) => a.minute - b.minute);
  renderAll();
}

async function resetSession() {
  pause();
  state.streamAbort?.abort();
  state.streamAbort = null;
  if (state.sessionId) {
    try {
      await client.closeSession(state.sessionId);
    } catch {
      // already gone
    }
  }
  state.sessionId = null;
  state.frames = [];
  state.whatIf = emptyWhatIf();
  renderAll();
}

async function newSession() {
  await resetSession();
  const select = el<HTMLSelectElement>('case-select');
  const caseId = select.value;
  if (!caseId) return;
  state.caseId = caseId;
  state.caseMinutes = state.cases.find((c) => c.case_id === caseId)?.minutes ?? 0;
  state.sessionId = await client.createSession('replay', caseId);
  setStatus(`session ${state.sessionId} on ${caseId} (${state.caseMinutes} min)`);
  const abort = new AbortController();
  state.streamAbort = abort;
  void readSse(
    client.streamUrl(state.sessionId),
    (event) => {
      if (event.event === 'frame') applyFrame(JSON.parse(event.data) as PredictionFrame);
    },
    abort.signal,
  ).catch(() => undefined);
  renderAll();
}

async function step() {
  if (!state.sessionId) return;
  try {
    await client.tick(state.sessionId);
    // the frame itself arrives through the stream
  } catch (err) {
    pause();
    setStatus(`${err}`);
  }
}

function play() {
  if (state.playTimer !== null || !state.sessionId) return;
  const interval = Number(el<HTMLInputElement>('play-interval').value) || 500;
  state.playTimer = window.setInterval(() => {
    if (state.frames.length >= state.caseMinutes) {
      pause();
      return;
    }
    void step();
  }, interval);
  renderAll();
}

function pause() {
  if (state.playTimer !== null) {
    clearInterval(state.playTimer);
    state.playTimer = null;
  }
  renderAll();
}

// ---- what-if plumbing -------------------------------------------------------

async function postOverride(request: OverrideRequest) {
  if (!state.sessionId) return;
  state.whatIf = submitOverride(state.whatIf, request);
  const localId = state.whatIf.nextLocalId - 1;
  renderWhatIf();
  try {
    const overrideId = await client.applyOverride(state.sessionId, request);
    state.whatIf = acknowledgeOverride(state.whatIf, localId, overrideId);
  } catch (err) {
    state.whatIf = rejectOverride(state.whatIf, localId);
    setStatus(`override rejected: ${err}`);
  }
  renderWhatIf();
}

async function removeOverride(overrideId: string) {
  if (!state.sessionId) return;
  state.whatIf = beginRemove(state.whatIf, overrideId);
  renderWhatIf();
  try {
    await client.removeOverride(state.sessionId, overrideId);
  } finally {
    state.whatIf = confirmRemoved(state.whatIf, overrideId);
    renderWhatIf();
  }
}

function wireWhatIfForm() {
  el<HTMLButtonElement>('btn-vitals').addEventListener('click', () => {
    const field = el<HTMLSelectElement>('vitals-field').value;
    const value = Number(el<HTMLInputElement>('vitals-value').value);
    if (!Number.isFinite(value)) return;
    void postOverride({ kind: 'vitals', fields: { [field]: value } });
  });
  el<HTMLButtonElement>('btn-inject').addEventListener('click', () => {
    const activity = el<HTMLSelectElement>('event-activity').value;
    const minute = Number(el<HTMLInputElement>('event-minute').value);
    if (!activity || !Number.isFinite(minute)) return;
    const start = Math.max(0, Math.round(minute * 60));
    void postOverride({ kind: 'inject_event', activity, start_s: start, end_s: start + 59 });
  });
  el<HTMLButtonElement>('btn-suppress').addEventListener('click', () => {
    const activity = el<HTMLSelectElement>('event-activity').value;
    if (!activity) return;
    void postOverride({ kind: 'suppress_event', activity });
  });
}

// ---- bootstrap ------------------------------------------------------------

async function boot() {
  try {
    state.catalog = await client.catalog();
    state.cases = await client.cases();
    try {
      const report = await client.evalReport();
      state.f1ByLabel = new Map(report.per_label.map((r) => [r.label, r.f1]));
    } catch {
      // no report loaded: show every activity
      state.f1ByLabel = new Map(state.catalog.labels.map((l) => [l, 1.0]));
      state.cutoff = 0.0;
      el<HTMLInputElement>('cutoff').value = '0';
    }
  } catch (err) {
    setStatus(`service unreachable: ${err}`);
    return;
  }
  const select = el<HTMLSelectElement>('case-select');
  select.innerHTML = state.cases
    .map((c) => `<option value="${c.case_id}">${c.case_id} (${c.minutes} min)</option>`)
    .join('');
  const activitySelect = el<HTMLSelectElement>('event-activity');
  activitySelect.innerHTML = state.catalog.labels
    .map((l) => `<option value="${l}">${l}</option>`)
    .join('');

  el('btn-new').addEventListener('click', () => void newSession());
  el('btn-step').addEventListener('click', () => void step());
  el('btn-play').addEventListener('click', play);
  el('btn-pause').addEventListener('click', pause);
  el('btn-reset').addEventListener('click', () => void newSession());
  const cutoff = el<HTMLInputElement>('cutoff');
  cutoff.addEventListener('input', () => {
    state.cutoff = Number(cutoff.value);
    el('cutoff-value').textContent = cutoff.value;
    renderGrid();
  });
  wireWhatIfForm();
  setStatus(`ready — ${state.cases.length} cases, ${state.catalog.labels.length} activities`);
  renderAll();
}

void boot();
