import type { ProblemView, SubmissionResponseBody } from "../src/api.js";

export function problem(overrides: Partial<ProblemView> = {}): ProblemView {
  return {
    problem_id: "p1",
    kind: "program",
    prompt_prefix: "Write a Python program that",
    function_name: null,
    image_url: "/assets/c/p1.svg",
    max_prompt_words: null,
    solved: false,
    index: 0,
    problem_count: 3,
    ...overrides,
  };
}

export function passBody(overrides: Partial<SubmissionResponseBody> = {}): SubmissionResponseBody {
  return {
    verdict: "pass",
    feedback_message: "Success! Continue to the next problem.",
    generated_code: "print('ok')",
    first_failure: null,
    unlocked_next: true,
    attempt_number: 1,
    word_count: 8,
    ...overrides,
  };
}

export function failBody(overrides: Partial<SubmissionResponseBody> = {}): SubmissionResponseBody {
  return {
    verdict: "fail",
    feedback_message: "Test t1 failed.",
    generated_code: "print('wrong')",
    first_failure: { expected_display: "Hello Serena", actual_display: "wrong" },
    unlocked_next: false,
    attempt_number: 2,
    word_count: 9,
    ...overrides,
  };
}
