"""Submission orchestration: prompt to generation to sandbox to verdict.

The engine owns the rules the rest of the system relies on: sequential
progression (a problem unlocks only after the one before it passes), gap
free attempt numbering per (user, problem), word counting, the
first-failure feedback policy, and the repeated-generation robustness
measure.
"""

from __future__ import annotations

import dataclasses
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from datetime import datetime, timezone
from typing import Callable, Mapping

from .errors import (
    EmptyStudentText,
    GatewayError,
    IndexOutOfRange,
    LockedProblem,
    PromptTooLong,
    ProviderTimeout,
    SandboxUnavailable,
    UnknownCourse,
    UnknownUser,
)
from .gateway import (
    GeneratedProgram,
    GenerationRequest,
    build_full_prompt,
    compose_llm_prompt,
)
from .problems import Course, ProblemKind, PromptProblem, get_problem
from .sandbox import EvaluationResult, ExecutionLimits, SandboxExecutor, Verdict
from .storage import ProgressState, Store


def utcnow() -> datetime:
    return datetime.now(timezone.utc)


def word_count(prompt: str) -> int:
    """Number of maximal nonempty whitespace-separated tokens."""
    return len(prompt.split())


SUCCESS_MESSAGE = "Success! Continue to the next problem."
GENERATION_ERROR_MESSAGE = "The model did not return code. Revise your prompt and try again."
EXECUTION_ERROR_MESSAGE = "The grader could not run the generated code. Please try again."


def feedback_for(result: EvaluationResult) -> str:
    """Student-facing message; failing runs reveal the first failing test
    and nothing else."""
    if result.verdict is Verdict.PASS:
        return SUCCESS_MESSAGE
    if result.verdict is Verdict.GENERATION_ERROR:
        return GENERATION_ERROR_MESSAGE
    if result.verdict is Verdict.EXECUTION_ERROR:
        return EXECUTION_ERROR_MESSAGE
    failure = result.first_failure
    return (
        f"Test {failure.test_id} failed.\n"
        f"Expected:\n{failure.expected_display}\n"
        f"Got:\n{failure.actual_display}"
    )


@dataclass(frozen=True)
class Submission:
    submission_id: str
    user_id: str
    course_id: str
    problem_id: str
    attempt_number: int
    student_text: str
    full_prompt: str
    generated: GeneratedProgram | None
    result: EvaluationResult
    word_count: int
    submitted_at: datetime
    error_detail: str | None = None

    def to_record(self) -> dict:
        return {
            "submission_id": self.submission_id,
            "user_id": self.user_id,
            "course_id": self.course_id,
            "problem_id": self.problem_id,
            "attempt_number": self.attempt_number,
            "student_text": self.student_text,
            "full_prompt": self.full_prompt,
            "word_count": self.word_count,
            "submitted_at": self.submitted_at.isoformat(),
            "verdict": self.result.verdict.value,
            "outcomes": [
                {
                    "test_id": o.test_id,
                    "status": o.status.value,
                    "expected_display": o.expected_display,
                    "actual_display": o.actual_display,
                }
                for o in self.result.outcomes
            ],
            "generated_code": self.generated.source_code if self.generated else None,
            "raw_response": self.generated.raw_response if self.generated else None,
            "error_detail": self.error_detail,
        }


class GradingEngine:
    """End-to-end submission pipeline over a set of loaded courses.

    Distinct users submit concurrently; submissions for the same
    (user, problem) are serialized so attempt numbers stay gap-free.
    """

    def __init__(self, courses: Mapping[str, Course], provider, executor: SandboxExecutor,
                 store: Store, *, limits: ExecutionLimits | None = None,
                 clock: Callable[[], datetime] = utcnow):
        self.courses = dict(courses)
        self.provider = provider
        self.executor = executor
        self.store = store
        self.limits = limits or ExecutionLimits()
        self.clock = clock
        self._locks: dict[tuple[str, str, str], threading.Lock] = {}
        self._locks_guard = threading.Lock()
        self._progress_lock = threading.Lock()

    # -- lookup helpers --

    def course(self, course_id: str) -> Course:
        try:
            return self.courses[course_id]
        except KeyError:
            raise UnknownCourse(course_id) from None

    def _submission_lock(self, user_id: str, course_id: str, problem_id: str) -> threading.Lock:
        key = (user_id, course_id, problem_id)
        with self._locks_guard:
            return self._locks.setdefault(key, threading.Lock())

    # -- progression --

    def can_access(self, user_id: str, course_id: str, problem_index: int) -> bool:
        """Index 0 is always open; anything later needs every earlier
        problem solved."""
        course = self.course(course_id)
        if not 0 <= problem_index < len(course.problems):
            raise IndexOutOfRange(
                f"problem index {problem_index} out of range for {course_id!r}"
            )
        if problem_index == 0:
            return True
        progress = self.store.load_progress(user_id, course_id)
        return problem_index <= progress.highest_unlocked_index

    def _record_pass(self, user_id: str, course: Course, problem: PromptProblem,
                     problem_index: int) -> bool:
        """Mark solved and advance the unlock frontier. Solved is sticky:
        later failures never re-lock. Returns True when a new index opened."""
        with self._progress_lock:
            progress = self.store.load_progress(user_id, course.course_id)
            solved = set(progress.solved)
            solved.add(problem.problem_id)
            frontier = progress.highest_unlocked_index
            advanced = False
            while frontier < len(course.problems) and course.problems[frontier].problem_id in solved:
                frontier += 1
                advanced = True
            if advanced or solved != set(progress.solved):
                self.store.save_progress(ProgressState(
                    user_id=user_id,
                    course_id=course.course_id,
                    highest_unlocked_index=frontier,
                    solved=frozenset(solved),
                ))
            return advanced

    # -- submission pipeline --

    def submit(self, user_id: str, course_id: str, problem_index: int,
               student_text: str) -> Submission:
        """Run one attempt end to end and persist it.

        Provider failures still produce a recorded attempt (verdict
        ``generation_error``); a provider timeout is additionally re-raised
        so callers can surface the upstream failure.
        """
        course = self.course(course_id)
        problem = get_problem(course, problem_index)
        if self.store.get_user(user_id) is None:
            raise UnknownUser(user_id)
        if not self.can_access(user_id, course_id, problem_index):
            raise LockedProblem(
                f"problem {problem_index} is locked for user {user_id!r}"
            )

        trimmed = student_text.strip()
        if not trimmed:
            raise EmptyStudentText("student text is empty")

        full_prompt = problem.prompt_prefix + " " + trimmed
        n_words = word_count(full_prompt)
        if problem.max_prompt_words is not None and n_words > problem.max_prompt_words:
            raise PromptTooLong(problem.max_prompt_words, n_words)

        with self._submission_lock(user_id, course_id, problem.problem_id):
            attempt_number = 1 + len(self.store.query_submissions(
                course_id=course_id, problem_id=problem.problem_id, user_id=user_id
            ))

            llm_prompt = build_full_prompt(problem, student_text)
            request = GenerationRequest(
                full_prompt=llm_prompt,
                problem_id=problem.problem_id,
                attempt_nonce=attempt_number,
            )

            generated: GeneratedProgram | None = None
            error_detail: str | None = None
            provider_timeout: ProviderTimeout | None = None
            try:
                generated = self.provider.generate(request)
            except ProviderTimeout as exc:
                error_detail = f"provider timeout: {exc}"
                provider_timeout = exc
            except GatewayError as exc:
                error_detail = f"{type(exc).__name__}: {exc}"

            if generated is not None:
                try:
                    result = self._evaluate(problem, generated.source_code)
                except SandboxUnavailable as exc:
                    error_detail = f"sandbox unavailable: {exc}"
                    result = EvaluationResult(Verdict.EXECUTION_ERROR, (), None)
            else:
                result = EvaluationResult(Verdict.GENERATION_ERROR, (), None)

            submission = Submission(
                submission_id="",
                user_id=user_id,
                course_id=course_id,
                problem_id=problem.problem_id,
                attempt_number=attempt_number,
                student_text=trimmed,
                full_prompt=full_prompt,
                generated=generated,
                result=result,
                word_count=n_words,
                submitted_at=self.clock(),
                error_detail=error_detail,
            )
            record = submission.to_record()
            del record["submission_id"]
            sid = self.store.append_submission(record)
            submission = dataclasses.replace(submission, submission_id=sid)

        if result.verdict is Verdict.PASS:
            self._record_pass(user_id, course, problem, problem_index)

        if provider_timeout is not None:
            raise provider_timeout
        return submission

    def _evaluate(self, problem: PromptProblem, code: str) -> EvaluationResult:
        if problem.kind is ProblemKind.PROGRAM:
            return self.executor.run_program_tests(
                code, list(problem.tests), self.limits, problem.runtime
            )
        return self.executor.run_function_tests(
            code, problem.function_name, list(problem.tests), self.limits, problem.runtime
        )

    # -- robustness --

    def robustness(self, course_id: str, problem_id: str, prompt_text: str, k: int,
                   provider=None) -> float:
        """Fraction of k fresh generations from the same prompt that pass.

        Never touches progression or the student submission log; each run
        is appended to the separate robustness log.
        """
        course = self.course(course_id)
        problem = course.problems[course.index_of(problem_id)]
        fraction = measure_robustness(
            problem, prompt_text, k,
            provider if provider is not None else self.provider,
            self.executor, self.limits,
        )
        self.store.append_robustness_run({
            "course_id": course_id,
            "problem_id": problem_id,
            "prompt_text": prompt_text,
            "k": k,
            "fraction_passed": fraction,
            "measured_at": self.clock().isoformat(),
        })
        return fraction


def measure_robustness(problem: PromptProblem, prompt_text: str, k: int, provider,
                       executor: SandboxExecutor,
                       limits: ExecutionLimits | None = None) -> float:
    """k independent generations (distinct nonces), each judged in the
    sandbox; provider errors count as failures."""
    if k < 1:
        raise ValueError("k must be at least 1")
    limits = limits or ExecutionLimits()
    llm_prompt = compose_llm_prompt(problem, prompt_text)

    def one(nonce: int) -> bool:
        request = GenerationRequest(
            full_prompt=llm_prompt, problem_id=problem.problem_id, attempt_nonce=nonce
        )
        try:
            generated = provider.generate(request)
        except GatewayError:
            return False
        try:
            if problem.kind is ProblemKind.PROGRAM:
                result = executor.run_program_tests(
                    generated.source_code, list(problem.tests), limits, problem.runtime
                )
            else:
                result = executor.run_function_tests(
                    generated.source_code, problem.function_name, list(problem.tests),
                    limits, problem.runtime,
                )
        except SandboxUnavailable:
            return False
        return result.verdict is Verdict.PASS

    workers = min(k, max(1, executor.max_workers))
    with ThreadPoolExecutor(max_workers=workers) as pool:
        passes = sum(pool.map(one, range(k)))
    return passes / k
