import { Answer, Question } from "./types.js";

/**
 * Pure state machine for the one-question-at-a-time flow.
 *
 * Invariants enforced here:
 *  - submit is only possible while a leased question is shown
 *  - exactly one submission per question: once submitting/submitted, further
 *    submit events are ignored (double-click, double-Enter)
 *  - "u" clears the staged answer before submission, never after
 */

export type FlowState =
  | { kind: "loading" }
  | { kind: "empty" }
  | { kind: "no-round" }
  | { kind: "question"; question: Question; staged: Answer | null }
  | { kind: "submitting"; question: Question; answer: Answer }
  | { kind: "done"; message: string };

export type FlowEvent =
  | { type: "got-question"; question: Question }
  | { type: "got-empty" }
  | { type: "got-no-round" }
  | { type: "stage"; answer: Answer }
  | { type: "undo" }
  | { type: "submit" }
  | { type: "submit-ok" }
  | { type: "submit-expired" }
  | { type: "submit-conflict" }
  | { type: "finished"; message: string };

export const initialState: FlowState = { kind: "loading" };

export function reduce(state: FlowState, event: FlowEvent): FlowState {
  switch (event.type) {
    case "got-question":
      // never replace a question mid-submit; ignore stray fetch results
      if (state.kind === "submitting") return state;
      return { kind: "question", question: event.question, staged: null };
    case "got-empty":
      return state.kind === "submitting" ? state : { kind: "empty" };
    case "got-no-round":
      return state.kind === "submitting" ? state : { kind: "no-round" };
    case "stage":
      if (state.kind !== "question") return state;
      return { ...state, staged: event.answer };
    case "undo":
      if (state.kind !== "question") return state;
      return { ...state, staged: null };
    case "submit":
      if (state.kind !== "question" || state.staged === null) return state;
      return { kind: "submitting", question: state.question, answer: state.staged };
    case "submit-ok":
    case "submit-expired":
    case "submit-conflict":
      // in every outcome the question is finished for us; go fetch the next
      if (state.kind !== "submitting") return state;
      return { kind: "loading" };
    case "finished":
      return { kind: "done", message: event.message };
  }
}

export function canSubmit(state: FlowState): boolean {
  return state.kind === "question" && state.staged !== null;
}
