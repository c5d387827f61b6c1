// Wire types mirroring the service API payloads (field names match the
// server's domain types verbatim).

export type CellState = 'TP' | 'FP' | 'FN' | 'TN';

export interface FrameContext {
  last_k: string[];
  vitals: Record<string, number | string | null> | null;
  static: Record<string, number | string | null>;
}

export interface PredictionFrame {
  minute: number;
  probabilities: number[];
  thresholds: number[];
  predicted: string[];
  true?: string[];
  correctness?: Record<string, CellState>;
  context: FrameContext;
}

export interface CatalogInfo {
  labels: string[];
  vocabularies: Record<string, string[]>;
}

export interface CaseInfo {
  case_id: string;
  duration_s: number;
  minutes: number;
}

export interface PerLabelEval {
  label: string;
  tp: number;
  fp: number;
  fn: number;
  support: number;
  f1: number;
}

export interface EvalReport {
  split: string;
  weighted_f1: number;
  samples_f1: number;
  per_label: PerLabelEval[];
}

export interface TimelineMinute {
  minute: number;
  predicted: string[];
  true: string[];
  cells: Record<string, CellState>;
}

export interface TimelineExport {
  case_id: string;
  cutoff: number;
  activities: string[];
  minutes: TimelineMinute[];
}

export type OverrideKind = 'vitals' | 'static' | 'inject_event' | 'suppress_event';

export interface OverrideRequest {
  kind: OverrideKind;
  fields?: Record<string, number | string>;
  activity?: string;
  start_s?: number;
  end_s?: number;
}
