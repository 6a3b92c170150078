import itertools
from datetime import datetime, timedelta, timezone
from pathlib import Path

import pytest

from promptgym import (
    Course,
    ExecutionLimits,
    MockEntry,
    MockProvider,
    ProblemKind,
    PromptProblem,
    SandboxExecutor,
    TestCase,
    build_full_prompt,
    load_course,
)
from promptgym.fixtures import sample_course_dir
from promptgym.grading import GradingEngine
from promptgym.sandbox import EvaluationResult, TestOutcome, TestStatus
from promptgym.storage import Role, Store

FAST_LIMITS = ExecutionLimits(wall_clock_timeout=5.0, max_stdout_bytes=64 * 1024)


@pytest.fixture(scope="session")
def sample_course() -> Course:
    return load_course(sample_course_dir())


@pytest.fixture(scope="session")
def executor() -> SandboxExecutor:
    return SandboxExecutor(max_workers=4)


@pytest.fixture(scope="session")
def solutions(sample_course) -> dict[str, str]:
    return {
        p.problem_id: sample_course.solution_path(p.problem_id).read_text()
        for p in sample_course.problems
    }


@pytest.fixture
def store(tmp_path) -> Store:
    s = Store(tmp_path / "data")
    s.add_user("alice", "Alice", Role.STUDENT, "alice-secret")
    s.add_user("bob", "Bob", Role.STUDENT, "bob-secret")
    s.add_user("teach", "Teacher", Role.INSTRUCTOR, "teach-secret")
    return s


class TickingClock:
    """Deterministic clock advancing one second per reading."""

    def __init__(self, start="2024-07-01T00:00:00+00:00"):
        self._now = datetime.fromisoformat(start)

    def __call__(self) -> datetime:
        self._now += timedelta(seconds=1)
        return self._now


@pytest.fixture
def clock() -> TickingClock:
    return TickingClock()


class FakeExecutor:
    """Instant stand-in for the sandbox: code containing the token PASS
    passes every test, anything else fails every test. Display strings
    follow the real executor's contract (expected side comes from the
    test data) so confidentiality checks stay meaningful."""

    max_workers = 4

    def run_program_tests(self, code, tests, limits, runtime):
        return self._result(code, tests)

    def run_function_tests(self, code, function_name, tests, limits, runtime):
        return self._result(code, tests)

    @staticmethod
    def _result(code, tests):
        from promptgym.sandbox import canonical_json, normalize_output

        passing = "PASS" in code
        outcomes = []
        for t in tests:
            if t.expected_stdout is not None:
                expected = normalize_output(t.expected_stdout)
            else:
                expected = canonical_json(t.expected_return)
            outcomes.append(TestOutcome(
                t.test_id,
                TestStatus.PASS if passing else TestStatus.WRONG_OUTPUT,
                expected,
                expected if passing else "(wrong answer)",
            ))
        return EvaluationResult.from_outcomes(outcomes)


@pytest.fixture
def fake_executor() -> FakeExecutor:
    return FakeExecutor()


def make_problem(problem_id="p1", kind=ProblemKind.PROGRAM, n_tests=2, **overrides) -> PromptProblem:
    if kind is ProblemKind.PROGRAM:
        tests = tuple(
            TestCase(test_id=f"t{i + 1}", stdin_text=f"in{i}\n", expected_stdout=f"out{i}\n")
            for i in range(n_tests)
        )
    else:
        tests = tuple(
            TestCase(test_id=f"t{i + 1}", arguments=(i,), expected_return=i)
            for i in range(n_tests)
        )
    fields = dict(
        problem_id=problem_id,
        kind=kind,
        prompt_prefix="Write a Python program that",
        image_asset=f"assets/{problem_id}.svg",
        tests=tests,
        function_name="fn" if kind is ProblemKind.FUNCTION else None,
    )
    fields.update(overrides)
    return PromptProblem(**fields)


def make_course(n_problems=3, course_id="course-x", root=Path("/nonexistent")) -> Course:
    problems = tuple(make_problem(problem_id=f"p{i + 1}") for i in range(n_problems))
    return Course(course_id=course_id, title="Synthetic", problems=problems, root=root)


def provider_for(course: Course, replies: dict[tuple[str, str], str]) -> MockProvider:
    """Mock provider answering specific (problem_id, student_text) pairs."""
    table = {}
    for (problem_id, student_text), code in replies.items():
        problem = course.problems[course.index_of(problem_id)]
        prompt = build_full_prompt(problem, student_text)
        table[MockProvider.key_for(prompt)] = MockEntry(code=code)
    return MockProvider(table)


def engine_with(courses, provider, executor, store, clock=None, limits=None) -> GradingEngine:
    if isinstance(courses, Course):
        courses = {courses.course_id: courses}
    kwargs = {}
    if clock is not None:
        kwargs["clock"] = clock
    if limits is not None:
        kwargs["limits"] = limits
    return GradingEngine(courses, provider, executor, store, **kwargs)


_uid = itertools.count(1)


def fresh_user(store: Store, role=Role.STUDENT) -> str:
    user_id = f"user{next(_uid)}"
    store.add_user(user_id, user_id.title(), role, f"{user_id}-secret")
    return user_id
