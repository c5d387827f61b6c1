// Pure timeline-grid view model: rows are activities (filtered by test F1),
// columns are minutes, each cell derived solely from received frames.

import type { CellState, PredictionFrame } from './types.js';

export interface TimelineCell {
  state: CellState;
  probability: number;
  threshold: number;
}

export interface TimelineGrid {
  activities: string[];
  minutes: number[];
  /** cells[activity][minute index within `minutes`] */
  cells: Map<string, TimelineCell[]>;
}

/** Activities whose test F1 exceeds the cutoff, in catalog order. */
export function filterActivities(
  labels: string[],
  f1ByLabel: Map<string, number>,
  cutoff: number,
): string[] {
  return labels.filter((name) => (f1ByLabel.get(name) ?? 0) > cutoff);
}

function cellState(frame: PredictionFrame, activity: string): CellState {
  if (frame.correctness) return frame.correctness[activity] ?? 'TN';
  // live mode has no ground truth; render predicted-vs-not as TP/TN
  return frame.predicted.includes(activity) ? 'TP' : 'TN';
}

/**
 * Build the grid from frames received so far. Pure: same frames + filter
 * always produce the same grid, and frames arriving incrementally only
 * append columns.
 */
export function buildTimelineGrid(
  frames: PredictionFrame[],
  labels: string[],
  activities: string[],
): TimelineGrid {
  const ordered = [...frames].sort((a, b) => a.minute - b.minute);
  const index = new Map(labels.map((name, i) => [name, i] as const));
  const cells = new Map<string, TimelineCell[]>();
  for (const name of activities) cells.set(name, []);
  for (const frame of ordered) {
    for (const name of activities) {
      const i = index.get(name);
      cells.get(name)!.push({
        state: cellState(frame, name),
        probability: i === undefined ? 0 : frame.probabilities[i] ?? 0,
        threshold: i === undefined ? 1 : frame.thresholds[i] ?? 1,
      });
    }
  }
  return { activities, minutes: ordered.map((f) => f.minute), cells };
}

/** Flatten a grid to {activity, minute, state} triples, handy for diffing. */
export function gridCells(
  grid: TimelineGrid,
): { activity: string; minute: number; state: CellState }[] {
  const out: { activity: string; minute: number; state: CellState }[] = [];
  for (const activity of grid.activities) {
    const row = grid.cells.get(activity) ?? [];
    row.forEach((cell, i) => {
      out.push({ activity, minute: grid.minutes[i] ?? i, state: cell.state });
    });
  }
  return out;
}
