export interface Box {
  page: number;
  x0: number;
  y0: number;
  x1: number;
  y1: number;
}

export interface TextLine extends Box {
  text: string;
}

export interface Question {
  question_id: string;
  candidate_id: string;
  doc_id: string;
  field_id: string;
  display_name: string;
  prompt: string;
  span_text: string;
  highlight: Box;
  text_lines: TextLine[];
  lease?: { annotator_id: string; expires_in_seconds: number };
}

export interface Progress {
  phase: string;
  round: number;
  questions_answered: number;
  questions_total: number;
  answered_cumulative: number;
  seconds_spent: number;
  seconds_total: number;
  current_f1: number | null;
}

export type Answer = "yes" | "no";

export type NextResult =
  | { kind: "question"; question: Question }
  | { kind: "empty" }        // 204: nothing to do right now (retraining too)
  | { kind: "no-round" };    // 409: no live experiment

export type SubmitResult =
  | { kind: "ok"; progress: Progress }
  | { kind: "expired" }      // 410: lease gone, refetch
  | { kind: "conflict" };    // 409: different answer already recorded
