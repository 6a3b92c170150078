"""Subprocess sandbox: run untrusted generated code and judge it.

Each run gets a fresh temporary working directory, a scrubbed environment,
a wall-clock kill, a CPU rlimit backstop, and a stdout byte cap enforced by
a reader thread that kills the process group on overflow. This is
best-effort isolation for desk-scale deployments, not container-grade:
nothing stops well-crafted code from reaching the network, but no secrets
are present in the environment and runs cannot see each other's files.
"""

from __future__ import annotations

import json
import math
import os
import shlex
import shutil
import signal
import subprocess
import sys
import tempfile
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Any, Sequence

from .errors import SandboxSetupFailure
from .problems import TestCase

try:
    import resource
except ImportError:  # non-POSIX; limits degrade to wall-clock kill only
    resource = None

_STDERR_CAP = 64 * 1024
_DISPLAY_CAP = 2048
_POLL_INTERVAL = 0.02
_FSIZE_SLACK = 1024 * 1024


class TestStatus(str, Enum):
    PASS = "pass"
    WRONG_OUTPUT = "wrong_output"
    RUNTIME_ERROR = "runtime_error"
    TIMEOUT = "timeout"
    OUTPUT_OVERFLOW = "output_overflow"


class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    GENERATION_ERROR = "generation_error"
    EXECUTION_ERROR = "execution_error"


@dataclass(frozen=True)
class ExecutionLimits:
    wall_clock_timeout: float = 10.0
    max_stdout_bytes: int = 64 * 1024
    max_processes: int = 1

    def __post_init__(self):
        if self.wall_clock_timeout <= 0 or self.max_stdout_bytes <= 0 or self.max_processes <= 0:
            raise ValueError("all execution limits must be positive")


@dataclass(frozen=True)
class TestOutcome:
    test_id: str
    status: TestStatus
    expected_display: str
    actual_display: str


@dataclass(frozen=True)
class EvaluationResult:
    verdict: Verdict
    outcomes: tuple[TestOutcome, ...]
    first_failure: TestOutcome | None

    @classmethod
    def from_outcomes(cls, outcomes: Sequence[TestOutcome]) -> "EvaluationResult":
        outcomes = tuple(outcomes)
        first_failure = next((o for o in outcomes if o.status is not TestStatus.PASS), None)
        verdict = Verdict.PASS if first_failure is None else Verdict.FAIL
        return cls(verdict=verdict, outcomes=outcomes, first_failure=first_failure)


def normalize_output(text: str) -> str:
    """Line-ending and trailing-whitespace normalization applied to both
    sides of every program-output comparison."""
    lines = text.replace("\r\n", "\n").replace("\r", "\n").split("\n")
    lines = [line.rstrip() for line in lines]
    while lines and lines[-1] == "":
        lines.pop()
    return "\n".join(lines)


def canonical_json(value: Any) -> str:
    """Language-neutral encoding used for function return values: sorted
    keys, no insignificant whitespace, no NaN/Infinity."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=False)


def values_match(expected: Any, actual: Any, *, rel_tol: float = 1e-9) -> bool:
    """Structural equality over JSON values; numbers compare with relative
    tolerance, bools only with bools."""
    if isinstance(expected, bool) or isinstance(actual, bool):
        return isinstance(expected, bool) and isinstance(actual, bool) and expected == actual
    if isinstance(expected, (int, float)) and isinstance(actual, (int, float)):
        return math.isclose(expected, actual, rel_tol=rel_tol, abs_tol=0.0)
    if isinstance(expected, list) and isinstance(actual, list):
        return len(expected) == len(actual) and all(
            values_match(e, a, rel_tol=rel_tol) for e, a in zip(expected, actual)
        )
    if isinstance(expected, dict) and isinstance(actual, dict):
        return expected.keys() == actual.keys() and all(
            values_match(v, actual[k], rel_tol=rel_tol) for k, v in expected.items()
        )
    return type(expected) is type(actual) and expected == actual


def _truncate(text: str, cap: int = _DISPLAY_CAP) -> str:
    if len(text) <= cap:
        return text
    return text[:cap] + "...(truncated)"


class _RunKind(Enum):
    COMPLETED = "completed"
    TIMEOUT = "timeout"
    OVERFLOW = "overflow"


@dataclass
class _RawRun:
    kind: _RunKind
    stdout: str
    stderr: str
    exit_code: int


def _split_command(runtime: str, script_path: Path) -> list[str]:
    raw_args = shlex.split(runtime)
    argv = [arg.replace("{script}", str(script_path)) for arg in raw_args]
    if not any("{script}" in arg for arg in raw_args):
        argv.append(str(script_path))
    if argv and not os.path.isabs(argv[0]) and shutil.which(argv[0]) is None:
        if argv[0] in ("python3", "python"):
            argv[0] = sys.executable
    return argv


def _scrubbed_env(workdir: Path) -> dict[str, str]:
    return {
        "PATH": "/usr/local/bin:/usr/bin:/bin",
        "HOME": str(workdir),
        "TMPDIR": str(workdir),
        "LANG": "C.UTF-8",
        "LC_ALL": "C.UTF-8",
        "PYTHONIOENCODING": "utf-8",
        "PYTHONDONTWRITEBYTECODE": "1",
    }


def _apply_rlimits(pid: int, limits: ExecutionLimits) -> None:
    """Best-effort kernel backstops set from the parent via prlimit(2); a
    preexec hook would force subprocess onto its slow fork path."""
    if resource is None or not hasattr(resource, "prlimit"):
        return
    cpu_seconds = int(limits.wall_clock_timeout) + 2
    bounds = (
        ("RLIMIT_CPU", cpu_seconds),
        ("RLIMIT_NPROC", limits.max_processes),
        ("RLIMIT_FSIZE", limits.max_stdout_bytes + _FSIZE_SLACK),
    )
    for key, bound in bounds:
        try:
            resource.prlimit(pid, getattr(resource, key), (bound, bound))
        except (AttributeError, ValueError, OSError):
            pass


def _kill_group(proc: subprocess.Popen) -> None:
    try:
        os.killpg(proc.pid, signal.SIGKILL)
    except (ProcessLookupError, PermissionError, OSError):
        try:
            proc.kill()
        except OSError:
            pass


class SandboxExecutor:
    """Thread-safe handle running code in isolated subprocesses.

    A semaphore bounds the number of concurrently live sandboxes; callers
    may share one executor across threads.
    """

    def __init__(self, max_workers: int = 4, base_dir: str | Path | None = None):
        if max_workers < 1:
            raise ValueError("max_workers must be at least 1")
        self.max_workers = max_workers
        self._slots = threading.BoundedSemaphore(max_workers)
        self._base_dir = Path(base_dir) if base_dir else None

    # -- low-level single process run --

    def _execute(self, argv: list[str], stdin_text: str, limits: ExecutionLimits,
                 workdir: Path) -> _RawRun:
        """Run one process with stdio redirected to files in the working
        directory; a poll loop enforces the wall clock and the stdout cap
        (an rlimit on file size backstops the cap in the kernel)."""
        out_path = workdir / ".stdout"
        err_path = workdir / ".stderr"
        if stdin_text:
            stdin_path = workdir / ".stdin"
            stdin_path.write_text(stdin_text, encoding="utf-8")
            stdin_file = open(stdin_path, "rb")
        else:
            stdin_file = subprocess.DEVNULL

        overflow = False
        timed_out = False
        with self._slots:
            try:
                with open(out_path, "wb") as out_file, open(err_path, "wb") as err_file:
                    proc = subprocess.Popen(
                        argv,
                        stdin=stdin_file,
                        stdout=out_file,
                        stderr=err_file,
                        cwd=str(workdir),
                        env=_scrubbed_env(workdir),
                        start_new_session=True,
                    )
            except OSError as exc:
                raise SandboxSetupFailure(f"cannot spawn interpreter {argv[0]!r}: {exc}") from exc
            finally:
                if stdin_file is not subprocess.DEVNULL:
                    stdin_file.close()
            _apply_rlimits(proc.pid, limits)

            deadline = time.monotonic() + limits.wall_clock_timeout
            while True:
                try:
                    proc.wait(timeout=_POLL_INTERVAL)
                    break
                except subprocess.TimeoutExpired:
                    pass
                if out_path.stat().st_size > limits.max_stdout_bytes:
                    overflow = True
                elif time.monotonic() >= deadline:
                    timed_out = True
                else:
                    continue
                _kill_group(proc)
                proc.wait()
                break

        with open(out_path, "rb") as handle:
            out_bytes = handle.read(limits.max_stdout_bytes + 1)
        with open(err_path, "rb") as handle:
            handle.seek(max(0, err_path.stat().st_size - _STDERR_CAP))
            err_bytes = handle.read(_STDERR_CAP)
        if len(out_bytes) > limits.max_stdout_bytes:
            overflow = True
            out_bytes = out_bytes[: limits.max_stdout_bytes]

        stdout = out_bytes.decode("utf-8", errors="replace")
        stderr = err_bytes.decode("utf-8", errors="replace")
        if overflow:
            kind = _RunKind.OVERFLOW
        elif timed_out:
            kind = _RunKind.TIMEOUT
        else:
            kind = _RunKind.COMPLETED
        return _RawRun(kind=kind, stdout=stdout, stderr=stderr, exit_code=proc.returncode)

    def _fresh_workdir(self) -> Path:
        try:
            return Path(tempfile.mkdtemp(prefix="pgrun-", dir=self._base_dir))
        except OSError as exc:
            raise SandboxSetupFailure(f"cannot create sandbox directory: {exc}") from exc

    # -- judging --

    def run_program_tests(self, code: str, tests: Sequence[TestCase],
                          limits: ExecutionLimits, runtime: str) -> EvaluationResult:
        """Run every program test in its own fresh process and compare
        normalized stdout. All tests run even after a failure."""
        outcomes = []
        for test in tests:
            outcomes.append(self._run_one_program_test(code, test, limits, runtime))
        return EvaluationResult.from_outcomes(outcomes)

    def _run_one_program_test(self, code: str, test: TestCase,
                              limits: ExecutionLimits, runtime: str) -> TestOutcome:
        expected = normalize_output(test.expected_stdout or "")
        workdir = self._fresh_workdir()
        try:
            script = workdir / "main.py"
            script.write_text(code, encoding="utf-8")
            run = self._execute(
                _split_command(runtime, script), test.stdin_text or "", limits, workdir
            )
        finally:
            shutil.rmtree(workdir, ignore_errors=True)

        if run.kind is _RunKind.OVERFLOW:
            return TestOutcome(
                test.test_id, TestStatus.OUTPUT_OVERFLOW, expected,
                f"(output exceeded {limits.max_stdout_bytes} bytes)",
            )
        if run.kind is _RunKind.TIMEOUT:
            return TestOutcome(
                test.test_id, TestStatus.TIMEOUT, expected,
                f"(no result: timed out after {limits.wall_clock_timeout:g}s)",
            )
        if run.exit_code != 0:
            return TestOutcome(
                test.test_id, TestStatus.RUNTIME_ERROR, expected,
                _runtime_error_display(run),
            )
        actual = normalize_output(run.stdout)
        status = TestStatus.PASS if actual == expected else TestStatus.WRONG_OUTPUT
        return TestOutcome(test.test_id, status, expected, _truncate(actual))

    def run_function_tests(self, code: str, function_name: str, tests: Sequence[TestCase],
                           limits: ExecutionLimits, runtime: str) -> EvaluationResult:
        """Run all function tests through a single generated harness script;
        return values come back as one canonical-JSON envelope per line."""
        workdir = self._fresh_workdir()
        try:
            script = workdir / "main.py"
            script.write_text(_function_harness(code, function_name, tests), encoding="utf-8")
            run = self._execute(_split_command(runtime, script), "", limits, workdir)
        finally:
            shutil.rmtree(workdir, ignore_errors=True)

        envelopes = _parse_envelopes(run.stdout)
        outcomes = []
        for i, test in enumerate(tests):
            expected = canonical_json(test.expected_return)
            if i < len(envelopes):
                outcomes.append(_judge_envelope(test, expected, envelopes[i]))
            elif run.kind is _RunKind.TIMEOUT:
                outcomes.append(TestOutcome(
                    test.test_id, TestStatus.TIMEOUT, expected,
                    f"(no result: timed out after {limits.wall_clock_timeout:g}s)",
                ))
            elif run.kind is _RunKind.OVERFLOW:
                outcomes.append(TestOutcome(
                    test.test_id, TestStatus.OUTPUT_OVERFLOW, expected,
                    f"(output exceeded {limits.max_stdout_bytes} bytes)",
                ))
            else:
                outcomes.append(TestOutcome(
                    test.test_id, TestStatus.RUNTIME_ERROR, expected,
                    _runtime_error_display(run),
                ))
        return EvaluationResult.from_outcomes(outcomes)


def _runtime_error_display(run: _RawRun) -> str:
    err_line = next(
        (ln.strip() for ln in reversed(run.stderr.splitlines()) if ln.strip()), ""
    )
    detail = err_line or f"exit code {run.exit_code}"
    return _truncate(f"(runtime error: {detail})")


_ENVELOPE_MARKER = "__pg_result__ "  # student stdout is silenced, so collisions need intent


def _parse_envelopes(stdout: str) -> list[dict]:
    envelopes = []
    for line in stdout.split("\n"):
        if not line.startswith(_ENVELOPE_MARKER):
            continue
        try:
            parsed = json.loads(line[len(_ENVELOPE_MARKER):])
        except json.JSONDecodeError:
            continue
        if isinstance(parsed, dict) and "ok" in parsed:
            envelopes.append(parsed)
    return envelopes


def _judge_envelope(test: TestCase, expected: str, envelope: dict) -> TestOutcome:
    if not envelope.get("ok"):
        return TestOutcome(
            test.test_id, TestStatus.RUNTIME_ERROR, expected,
            _truncate(f"(runtime error: {envelope.get('error', 'unknown error')})"),
        )
    actual_value = envelope.get("value")
    if values_match(test.expected_return, actual_value):
        return TestOutcome(test.test_id, TestStatus.PASS, expected, _truncate(canonical_json(actual_value)))
    return TestOutcome(
        test.test_id, TestStatus.WRONG_OUTPUT, expected, _truncate(canonical_json(actual_value))
    )


_HARNESS_PRELUDE = """\
import json as _pg_json, os as _pg_os, sys as _pg_sys
_pg_out = _pg_os.fdopen(_pg_os.dup(1), "w", encoding="utf-8")
_pg_sys.stdout = open(_pg_os.devnull, "w", encoding="utf-8")
"""

_HARNESS_DRIVER = """
def _pg_call(_pg_name, _pg_args):
    try:
        _pg_fn = globals().get(_pg_name)
        if not callable(_pg_fn):
            raise NameError("function %r is not defined" % _pg_name)
        return {"ok": True, "value": _pg_fn(*_pg_args)}
    except BaseException as _pg_exc:
        return {"ok": False, "error": "%s: %s" % (type(_pg_exc).__name__, _pg_exc)}

for _pg_args in _PG_CALLS:
    _pg_res = _pg_call(_PG_NAME, _pg_args)
    try:
        _pg_line = _pg_json.dumps(_pg_res, sort_keys=True, separators=(",", ":"), allow_nan=False)
    except (TypeError, ValueError) as _pg_exc:
        _pg_line = _pg_json.dumps({"ok": False, "error": "return value is not JSON-serializable: %s" % _pg_exc})
    _pg_out.write("__pg_result__ " + _pg_line + "\\n")
    _pg_out.flush()
"""


def _function_harness(code: str, function_name: str, tests: Sequence[TestCase]) -> str:
    calls = json.dumps([list(t.arguments or ()) for t in tests])
    name = json.dumps(function_name)
    return (
        _HARNESS_PRELUDE
        + f"_PG_NAME = {name}\n_PG_CALLS = {calls}\n"
        + code
        + "\n"
        + _HARNESS_DRIVER
    )
