"""Course repositories of prompt problems: loading, validation, lookup.

A course lives in a directory with this layout::

    <course_root>/course.json
    <course_root>/assets/<image files>
    <course_root>/solutions/<problem_id>.py   (reference solutions; never served)

Tests are inlined in the manifest. Image assets are opaque files served
verbatim; the text of the exercise must exist only inside the image.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any

from .errors import (
    AssetMissing,
    DuplicateProblemId,
    IndexOutOfRange,
    ManifestMalformed,
    ManifestMissing,
)

MANIFEST_NAME = "course.json"
DEFAULT_RUNTIME = "python3 {script}"


class ProblemKind(str, Enum):
    PROGRAM = "program"
    FUNCTION = "function"


@dataclass(frozen=True)
class TestCase:
    """One hidden test. Program tests pair stdin with expected stdout;
    function tests pair call arguments with an expected return value."""

    test_id: str
    stdin_text: str | None = None
    expected_stdout: str | None = None
    arguments: tuple[Any, ...] | None = None
    expected_return: Any = None


@dataclass(frozen=True)
class PromptProblem:
    problem_id: str
    kind: ProblemKind
    prompt_prefix: str
    image_asset: str
    tests: tuple[TestCase, ...]
    function_name: str | None = None
    max_prompt_words: int | None = None
    runtime: str = DEFAULT_RUNTIME


@dataclass(frozen=True)
class Course:
    course_id: str
    title: str
    problems: tuple[PromptProblem, ...]
    root: Path

    def index_of(self, problem_id: str) -> int:
        for i, problem in enumerate(self.problems):
            if problem.problem_id == problem_id:
                return i
        raise IndexOutOfRange(f"no problem {problem_id!r} in course {self.course_id!r}")

    def solution_path(self, problem_id: str) -> Path:
        return self.root / "solutions" / f"{problem_id}.py"


@dataclass(frozen=True)
class ReferenceSolution:
    """Instructor-authored solution used only to validate a problem's tests."""

    problem_id: str
    source_code: str


def _require(obj: dict, key: str, kind: type, where: str) -> Any:
    if key not in obj:
        raise ManifestMalformed(f"{where}.{key}", "missing required field")
    value = obj[key]
    if kind is int and isinstance(value, bool):
        raise ManifestMalformed(f"{where}.{key}", "expected an integer")
    if not isinstance(value, kind):
        raise ManifestMalformed(f"{where}.{key}", f"expected {kind.__name__}")
    return value


def _parse_test(raw: Any, kind: ProblemKind, where: str) -> TestCase:
    if not isinstance(raw, dict):
        raise ManifestMalformed(where, "test entry must be an object")
    test_id = _require(raw, "test_id", str, where)
    if not test_id:
        raise ManifestMalformed(f"{where}.test_id", "must be non-empty")

    program_keys = {"stdin", "expected_stdout"}
    function_keys = {"arguments", "expected_return"}
    present = set(raw) - {"test_id"}

    if kind is ProblemKind.PROGRAM:
        if present - program_keys:
            raise ManifestMalformed(where, f"unexpected keys for program test: {sorted(present - program_keys)}")
        return TestCase(
            test_id=test_id,
            stdin_text=_require(raw, "stdin", str, where),
            expected_stdout=_require(raw, "expected_stdout", str, where),
        )

    if present - function_keys:
        raise ManifestMalformed(where, f"unexpected keys for function test: {sorted(present - function_keys)}")
    arguments = _require(raw, "arguments", list, where)
    if "expected_return" not in raw:
        raise ManifestMalformed(f"{where}.expected_return", "missing required field")
    return TestCase(
        test_id=test_id,
        arguments=tuple(arguments),
        expected_return=raw["expected_return"],
    )


def _parse_problem(raw: Any, index: int, root: Path) -> PromptProblem:
    where = f"problems[{index}]"
    if not isinstance(raw, dict):
        raise ManifestMalformed(where, "problem entry must be an object")

    problem_id = _require(raw, "problem_id", str, where)
    if not problem_id:
        raise ManifestMalformed(f"{where}.problem_id", "must be non-empty")

    kind_raw = _require(raw, "kind", str, where)
    try:
        kind = ProblemKind(kind_raw)
    except ValueError:
        raise ManifestMalformed(f"{where}.kind", f"unknown kind {kind_raw!r}") from None

    prompt_prefix = _require(raw, "prompt_prefix", str, where)
    if not prompt_prefix.strip():
        raise ManifestMalformed(f"{where}.prompt_prefix", "must be non-empty")

    function_name = raw.get("function_name")
    if kind is ProblemKind.FUNCTION:
        if not isinstance(function_name, str) or not function_name:
            raise ManifestMalformed(f"{where}.function_name", "required for function problems")
    elif function_name is not None:
        raise ManifestMalformed(f"{where}.function_name", "not allowed for program problems")

    image = _require(raw, "image", str, where)
    if not image.startswith("assets/") or ".." in image.split("/"):
        raise ManifestMalformed(f"{where}.image", "image path must live under assets/")
    if not (root / image).is_file():
        raise AssetMissing(str(root / image))

    max_words = raw.get("max_prompt_words")
    if max_words is not None:
        if isinstance(max_words, bool) or not isinstance(max_words, int) or max_words < 1:
            raise ManifestMalformed(f"{where}.max_prompt_words", "must be a positive integer")

    runtime = raw.get("runtime", DEFAULT_RUNTIME)
    if not isinstance(runtime, str) or not runtime.strip():
        raise ManifestMalformed(f"{where}.runtime", "must be a non-empty command template")

    tests_raw = _require(raw, "tests", list, where)
    if not tests_raw:
        raise ManifestMalformed(f"{where}.tests", "at least one test is required")
    tests = tuple(
        _parse_test(t, kind, f"{where}.tests[{i}]") for i, t in enumerate(tests_raw)
    )
    seen_ids = set()
    for t in tests:
        if t.test_id in seen_ids:
            raise ManifestMalformed(f"{where}.tests", f"duplicate test_id {t.test_id!r}")
        seen_ids.add(t.test_id)

    return PromptProblem(
        problem_id=problem_id,
        kind=kind,
        prompt_prefix=prompt_prefix,
        image_asset=image,
        tests=tests,
        function_name=function_name if kind is ProblemKind.FUNCTION else None,
        max_prompt_words=max_words,
        runtime=runtime,
    )


def load_course(root_path: str | Path) -> Course:
    """Parse and validate the course manifest at ``root_path``.

    Deterministic: the same directory bytes always produce a structurally
    equal :class:`Course`. Problem order in the manifest is the progression
    order.
    """
    root = Path(root_path)
    manifest_path = root / MANIFEST_NAME
    if not manifest_path.is_file():
        raise ManifestMissing(str(manifest_path))

    try:
        raw = json.loads(manifest_path.read_text(encoding="utf-8"))
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ManifestMalformed("<document>", f"invalid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ManifestMalformed("<document>", "manifest must be a JSON object")

    course_id = _require(raw, "course_id", str, "course")
    if not course_id:
        raise ManifestMalformed("course.course_id", "must be non-empty")
    title = _require(raw, "title", str, "course")
    problems_raw = _require(raw, "problems", list, "course")

    problems = tuple(
        _parse_problem(p, i, root) for i, p in enumerate(problems_raw)
    )
    seen = set()
    for problem in problems:
        if problem.problem_id in seen:
            raise DuplicateProblemId(problem.problem_id)
        seen.add(problem.problem_id)

    return Course(course_id=course_id, title=title, problems=problems, root=root)


def get_problem(course: Course, index: int) -> PromptProblem:
    """Return the problem at progression position ``index``."""
    if not 0 <= index < len(course.problems):
        raise IndexOutOfRange(
            f"problem index {index} out of range for course {course.course_id!r} "
            f"({len(course.problems)} problems)"
        )
    return course.problems[index]


def load_reference_solution(course: Course, problem_id: str) -> ReferenceSolution:
    path = course.solution_path(problem_id)
    if not path.is_file():
        raise AssetMissing(str(path))
    return ReferenceSolution(problem_id=problem_id, source_code=path.read_text(encoding="utf-8"))


def validate_problem(problem: PromptProblem, reference: ReferenceSolution, executor) -> list:
    """Run the reference solution against the problem's tests.

    Returns the list of non-passing outcomes; an empty list means the
    reference passes every test.
    """
    from .sandbox import ExecutionLimits, TestStatus

    limits = ExecutionLimits()
    if problem.kind is ProblemKind.PROGRAM:
        result = executor.run_program_tests(
            reference.source_code, list(problem.tests), limits, problem.runtime
        )
    else:
        result = executor.run_function_tests(
            reference.source_code, problem.function_name, list(problem.tests), limits, problem.runtime
        )
    return [o for o in result.outcomes if o.status is not TestStatus.PASS]
