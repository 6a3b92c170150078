"""Operator command line: serve the API, validate course repositories,
batch-evaluate prompts, and export analytics.

Exit codes: 0 success, 1 validation/evaluation failure or missing input,
2 bad course manifest, 3 cannot bind the listen address. Machine-readable
output (CSV) goes to stdout; diagnostics go to stderr.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import socket
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .analytics import ExportKind, export_csv
from .errors import (
    AssetMissing,
    DuplicateProblemId,
    GatewayError,
    ManifestMalformed,
    ManifestMissing,
    PromptGymError,
)
from .gateway import MockEntry, MockProvider, ProviderConfig, make_provider
from .grading import GradingEngine, measure_robustness, word_count
from .problems import (
    Course,
    load_course,
    load_reference_solution,
    validate_problem,
)
from .sandbox import ExecutionLimits, SandboxExecutor
from .storage import Store

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_BAD_MANIFEST = 2
EXIT_BIND_FAILURE = 3


def _err(message: str) -> None:
    print(message, file=sys.stderr)


def _load_courses(paths: list[str]) -> dict[str, Course]:
    courses = {}
    for path in paths:
        course = load_course(path)
        courses[course.course_id] = course
    return courses


def load_provider_config(path: str):
    """Build a provider from a JSON config file.

    ``provider_kind`` selects "http" (chat-completion wire shape) or
    "mock"; mock tables may key canned code by verbatim prompt text,
    prompt hash, or problem id.
    """
    raw = json.loads(Path(path).read_text(encoding="utf-8"))
    kind = raw.get("provider_kind", "http")
    if kind == "mock":
        table = {}
        by_problem = {}
        for entry in raw.get("table", []):
            mock = MockEntry(
                code=entry["code"],
                pass_probability=entry.get("pass_probability"),
                failing_code=entry.get("failing_code"),
            )
            if "prompt" in entry:
                table[MockProvider.key_for(entry["prompt"])] = mock
            elif "prompt_sha256" in entry:
                table[entry["prompt_sha256"]] = mock
            elif "problem_id" in entry:
                by_problem[entry["problem_id"]] = mock
            else:
                raise ValueError("mock table entry needs prompt, prompt_sha256, or problem_id")
        return MockProvider(table, by_problem=by_problem, seed=raw.get("seed", 0))
    config = ProviderConfig(
        provider_kind="http",
        endpoint_url=raw["endpoint_url"],
        model_name=raw.get("model_name", ""),
        temperature=raw.get("temperature", 0.7),
        api_key_env=raw.get("api_key_env", "PROMPTGYM_API_KEY"),
        request_timeout=raw.get("request_timeout", 30.0),
        max_retries=raw.get("max_retries", 2),
        response_content_pointer=raw.get(
            "response_content_pointer", "/choices/0/message/content"
        ),
    )
    return make_provider(config)


def cmd_serve(args) -> int:
    try:
        courses = _load_courses(args.course_dir)
    except (ManifestMissing, ManifestMalformed, AssetMissing, DuplicateProblemId) as exc:
        _err(f"cannot load course: {exc}")
        return EXIT_BAD_MANIFEST

    try:
        provider = load_provider_config(args.provider)
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot load provider config {args.provider}: {exc}")
        return EXIT_BAD_MANIFEST

    host, _, port_text = args.listen.rpartition(":")
    host = host or "127.0.0.1"
    try:
        port = int(port_text)
    except ValueError:
        _err(f"invalid listen address {args.listen!r}")
        return EXIT_BIND_FAILURE

    probe = socket.socket(socket.AF_INET, socket.SOCK_STREAM)
    try:
        probe.setsockopt(socket.SOL_SOCKET, socket.SO_REUSEADDR, 1)
        probe.bind((host, port))
    except OSError as exc:
        _err(f"cannot bind {host}:{port}: {exc}")
        return EXIT_BIND_FAILURE
    finally:
        probe.close()

    from .api import create_app

    store = Store(args.data_dir)
    executor = SandboxExecutor(max_workers=args.sandbox_workers)
    engine = GradingEngine(courses, provider, executor, store)
    app = create_app(engine, store, ui_dir=args.ui_dir)

    import uvicorn

    uvicorn.run(app, host=host, port=port, log_level="info")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        course = load_course(args.course_dir)
    except PromptGymError as exc:
        _err(f"cannot load course: {exc}")
        return EXIT_FAILURE

    executor = SandboxExecutor(max_workers=args.sandbox_workers)
    failed = False
    for problem in course.problems:
        try:
            reference = load_reference_solution(course, problem.problem_id)
        except AssetMissing as exc:
            print(f"{problem.problem_id} FAIL missing-solution")
            _err(str(exc))
            failed = True
            continue
        issues = validate_problem(problem, reference, executor)
        if issues:
            ids = ",".join(o.test_id for o in issues)
            print(f"{problem.problem_id} FAIL {ids}")
            failed = True
        else:
            print(f"{problem.problem_id} PASS")
    return EXIT_FAILURE if failed else EXIT_OK


def cmd_eval(args) -> int:
    try:
        course = load_course(args.course_dir)
    except PromptGymError as exc:
        _err(f"cannot load course: {exc}")
        return EXIT_FAILURE
    try:
        provider = load_provider_config(args.provider)
    except (OSError, ValueError, KeyError) as exc:
        _err(f"cannot load provider config: {exc}")
        return EXIT_FAILURE

    prompts_path = Path(args.prompts)
    if not prompts_path.is_file():
        _err(f"prompts file not found: {prompts_path}")
        return EXIT_FAILURE

    lines = []
    for lineno, line in enumerate(prompts_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            entry = json.loads(line)
            lines.append((entry["problem_id"], entry["prompt_text"]))
        except (json.JSONDecodeError, KeyError, TypeError) as exc:
            _err(f"skipping malformed prompts line {lineno}: {exc}")

    executor = SandboxExecutor(max_workers=args.sandbox_workers)
    limits = ExecutionLimits()
    problems = {p.problem_id: p for p in course.problems}

    def evaluate(item):
        problem_id, prompt_text = item
        problem = problems.get(problem_id)
        if problem is None:
            return [problem_id, "", "", word_count(prompt_text), "unknown problem_id"]
        try:
            pass1 = measure_robustness(problem, prompt_text, 1, provider, executor, limits)
            fraction = measure_robustness(problem, prompt_text, args.k, provider, executor, limits)
        except GatewayError as exc:
            return [problem_id, "", "", word_count(prompt_text), f"provider error: {exc}"]
        return [
            problem_id,
            "pass" if pass1 >= 1.0 else "fail",
            f"{fraction:.3f}",
            word_count(prompt_text),
            "",
        ]

    with ThreadPoolExecutor(max_workers=executor.max_workers) as pool:
        rows = list(pool.map(evaluate, lines))

    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    writer.writerow(["problem_id", "pass1", "robustness", "word_count", "note"])
    writer.writerows(rows)
    document = buffer.getvalue()

    sys.stdout.write(document)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
    return EXIT_OK


def cmd_analytics(args) -> int:
    try:
        course = load_course(args.course_dir)
    except PromptGymError as exc:
        _err(f"cannot load course: {exc}")
        return EXIT_FAILURE

    log_path = Path(args.data_dir) / f"submissions-{course.course_id}.jsonl"
    if not log_path.is_file():
        _err(f"no submission log at {log_path}")
        return EXIT_FAILURE

    store = Store(args.data_dir)
    log = store.query_submissions(course_id=course.course_id)
    order = [p.problem_id for p in course.problems]
    document = export_csv(ExportKind(args.kind), course.course_id, log, order)

    sys.stdout.write(document)
    if args.out:
        Path(args.out).write_text(document, encoding="utf-8")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="promptgym")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="run the API server")
    serve.add_argument("--course-dir", action="append", required=True,
                       help="course directory (repeatable)")
    serve.add_argument("--listen", default="127.0.0.1:8000")
    serve.add_argument("--provider", required=True, help="provider config JSON file")
    serve.add_argument("--data-dir", default="data")
    serve.add_argument("--ui-dir", default=None, help="optional static UI directory")
    serve.add_argument("--sandbox-workers", type=int, default=4)
    serve.set_defaults(func=cmd_serve)

    validate = sub.add_parser("validate", help="check reference solutions against tests")
    validate.add_argument("--course-dir", required=True)
    validate.add_argument("--sandbox-workers", type=int, default=4)
    validate.set_defaults(func=cmd_validate)

    evaluate = sub.add_parser("eval", help="batch robustness evaluation of prompts")
    evaluate.add_argument("--course-dir", required=True)
    evaluate.add_argument("--prompts", required=True, help="JSONL of {problem_id, prompt_text}")
    evaluate.add_argument("--k", type=int, default=5)
    evaluate.add_argument("--provider", required=True)
    evaluate.add_argument("--out", default=None)
    evaluate.add_argument("--sandbox-workers", type=int, default=4)
    evaluate.set_defaults(func=cmd_eval)

    analytics = sub.add_parser("analytics", help="export summary or timeline CSV")
    analytics.add_argument("--course-dir", required=True)
    analytics.add_argument("--data-dir", default="data")
    analytics.add_argument("--kind", choices=["summary", "timeline"], required=True)
    analytics.add_argument("--out", default=None)
    analytics.set_defaults(func=cmd_analytics)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
