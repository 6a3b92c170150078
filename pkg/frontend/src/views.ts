/**
 * DOM rendering for the problem screen.
 *
 * The layout follows the interactive loop: problem image, a prompt box
 * whose fixed prefix is a non-editable chip ahead of the editable
 * continuation, a submit control, then the outcome panel. Generated code
 * is display-only, and a failed run renders exactly one expected/actual
 * pair, never more.
 */

import {
  overWordLimit,
  promptWordCount,
  submitEnabled,
  type ProblemViewState,
} from "./state.js";

export interface ProblemHandlers {
  onDraftChange(text: string): void;
  onSubmit(): void;
  onNext(): void;
  onBack(): void;
  onRetry(): void;
}

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  className?: string,
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  if (className) node.className = className;
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderLocked(root: HTMLElement, handlers: ProblemHandlers): void {
  root.replaceChildren();
  const notice = el("div", "lock-notice");
  notice.append(
    el("p", undefined, "This problem is still locked. Solve the previous one first."),
  );
  const back = el("button", "back-link", "Back to course");
  back.addEventListener("click", () => handlers.onBack());
  notice.append(back);
  root.append(notice);
}

export function renderLoadError(root: HTMLElement, handlers: ProblemHandlers): void {
  root.replaceChildren();
  const banner = el("div", "retry-banner");
  banner.append(el("p", undefined, "Could not load the problem."));
  const retry = el("button", "retry-btn", "Retry");
  retry.addEventListener("click", () => handlers.onRetry());
  banner.append(retry);
  root.append(banner);
}

function renderOutcome(state: ProblemViewState, handlers: ProblemHandlers): HTMLElement {
  const outcome = el("section", "outcome");
  const body = state.lastResponse;
  if (!body) return outcome;

  if (body.verdict === "pass") {
    const banner = el("div", "success-banner", body.feedback_message);
    outcome.append(banner);
    if (body.unlocked_next) {
      const next = el("button", "next-btn", "Next problem");
      next.addEventListener("click", () => handlers.onNext());
      outcome.append(next);
    } else {
      outcome.append(el("p", "course-complete", "You have finished the course."));
    }
  } else if (body.verdict === "fail" && body.first_failure) {
    const failure = el("div", "failure-block");
    failure.append(el("p", "failure-title", "First failing test"));
    const expected = el("div", "expected-display");
    expected.append(el("span", "label", "Expected"));
    expected.append(el("pre", undefined, body.first_failure.expected_display));
    const actual = el("div", "actual-display");
    actual.append(el("span", "label", "Got"));
    actual.append(el("pre", undefined, body.first_failure.actual_display));
    failure.append(expected, actual);
    outcome.append(failure);
  } else {
    outcome.append(el("div", "revise-notice", body.feedback_message));
  }

  if (body.generated_code !== null && body.verdict !== "generation_error") {
    const panel = el("div", "code-panel");
    panel.append(el("p", "code-panel-title", "Generated code (read-only)"));
    const pre = el("pre");
    pre.append(el("code", undefined, body.generated_code));
    panel.append(pre);
    outcome.append(panel);
  }
  return outcome;
}

export function renderProblem(
  root: HTMLElement,
  state: ProblemViewState,
  handlers: ProblemHandlers,
  assetUrl: (imageUrl: string) => string = (u) => u,
): void {
  if (state.loadError) {
    renderLoadError(root, handlers);
    return;
  }
  root.replaceChildren();
  const screen = el("section", "problem-screen");

  const heading = el("header", "problem-heading");
  heading.append(el(
    "h2",
    undefined,
    `Problem ${state.problem.index + 1} of ${state.problem.problem_count}`,
  ));
  if (state.problem.solved) {
    heading.append(el("span", "solved-badge", "solved"));
  }
  screen.append(heading);

  const image = el("img", "problem-image");
  image.src = assetUrl(state.problem.image_url);
  image.alt = "Problem description (visual)";
  screen.append(image);

  const promptBox = el("div", "prompt-box");
  promptBox.append(el("span", "prefix-chip", state.problem.prompt_prefix));
  const draft = el("textarea", "draft-input");
  draft.placeholder = "finish the prompt...";
  draft.value = state.draftText;
  draft.addEventListener("input", () => handlers.onDraftChange(draft.value));
  promptBox.append(draft);
  screen.append(promptBox);

  if (state.problem.max_prompt_words !== null) {
    const counter = el(
      "p",
      "word-counter",
      `${promptWordCount(state)} / ${state.problem.max_prompt_words} words`,
    );
    if (overWordLimit(state)) counter.classList.add("over-limit");
    screen.append(counter);
  }

  const submit = el("button", "submit-btn",
    state.submitting ? "Generating..." : "Generate and test");
  submit.disabled = !submitEnabled(state);
  submit.addEventListener("click", () => handlers.onSubmit());
  screen.append(submit);

  screen.append(renderOutcome(state, handlers));
  root.append(screen);
}
