export interface ObjectMeta {
  oid: number;
  oname: string;
  bbox: [number, number, number, number];
  anames: string[];
}

export interface UnitMetadata {
  vid: number;
  fid: number;
  width: number;
  height: number;
  o0: ObjectMeta;
  o1?: ObjectMeta;
  o0_o1_rnames?: string[];
  o1_o0_rnames?: string[];
}

export type SessionState = "none" | "working" | "awaiting_label" | "done" | "failed";

export interface SampleView {
  state: SessionState;
  error?: string | null;
  unit?: number[];
  phase?: string;
  budget?: number;
  budget_used?: number;
  image?: string | null;
  metadata?: UnitMetadata;
  concept?: string;
  description?: string;
}

export interface CandidatesView {
  candidates: string[];
  weights: number[];
  history: Array<{
    iteration: number;
    phase: string;
    unit: number[];
    label: boolean;
    weights: number[];
  }>;
}

export interface ResultView {
  state: SessionState;
  error?: string;
  result?: {
    nl_text: string;
    dsl_text: string;
    matched_vids: number[];
    generated: Array<{ name: string; kind: string; dummied: boolean }>;
    selection_reports: unknown[];
    translation_retries: number;
  };
}
