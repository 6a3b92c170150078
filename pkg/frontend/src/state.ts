/**
 * Screen state for one problem and the pure rules the view enforces:
 * the submit control is live exactly when the trimmed draft is nonempty
 * and no submission is in flight (one in flight per tab, ever).
 */

import type { ProblemView, SubmissionResponseBody } from "./api.js";

export interface ProblemViewState {
  problem: ProblemView;
  draftText: string;
  lastResponse: SubmissionResponseBody | null;
  submitting: boolean;
  loadError: boolean;
}

export function initialState(problem: ProblemView): ProblemViewState {
  return {
    problem,
    draftText: "",
    lastResponse: null,
    submitting: false,
    loadError: false,
  };
}

export function submitEnabled(state: ProblemViewState): boolean {
  return state.draftText.trim().length > 0 && !state.submitting;
}

/** Mirrors the server's rule: whitespace tokens of prefix + draft. */
export function promptWordCount(state: ProblemViewState): number {
  const full = `${state.problem.prompt_prefix} ${state.draftText}`;
  return full.split(/\s+/).filter((token) => token.length > 0).length;
}

export function overWordLimit(state: ProblemViewState): boolean {
  const limit = state.problem.max_prompt_words;
  return limit !== null && promptWordCount(state) > limit;
}

export function withDraft(state: ProblemViewState, draftText: string): ProblemViewState {
  return { ...state, draftText };
}

export function beginSubmission(state: ProblemViewState): ProblemViewState {
  if (!submitEnabled(state)) return state;
  return { ...state, submitting: true };
}

export function applyResponse(
  state: ProblemViewState,
  body: SubmissionResponseBody,
): ProblemViewState {
  return {
    ...state,
    submitting: false,
    lastResponse: body,
    problem: body.verdict === "pass" ? { ...state.problem, solved: true } : state.problem,
  };
}

export function applySubmitFailure(state: ProblemViewState): ProblemViewState {
  return { ...state, submitting: false };
}
