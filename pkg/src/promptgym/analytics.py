"""Per-problem summary statistics and per-student submission timelines.

Everything here is a pure function over a snapshot of submission records
(dicts as stored in the JSONL log), so results are always reproducible by
replay.

Conventions, fixed once:
  * a "solver" is a user with at least one passing submission;
  * word statistics cover each solver's FIRST passing prompt only
    (students keep experimenting after success, which must not move the
    numbers);
  * submissions-to-solve counts attempts up to and including the first
    pass; the all-attempts variant is exported under its own column;
  * averages round half-up to 1 decimal, success percentage to an integer.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from enum import Enum
from typing import Iterable, Sequence

from .errors import EmptySummary


class ExportKind(str, Enum):
    SUMMARY = "summary"
    TIMELINE = "timeline"


@dataclass(frozen=True)
class ProblemSummary:
    problem_id: str
    attempters: int
    solvers: int
    success_pct: int | None
    avg_submissions_to_solve: float | None
    avg_submissions_all_attempts: float | None
    mean_words: float | None
    min_words: int | None
    max_words: int | None


@dataclass(frozen=True)
class TimelinePoint:
    user_id: str
    attempt_number: int
    word_count: int
    passed: bool
    is_final_failure: bool


def round_half_up(value: float, ndigits: int = 0) -> float:
    quantum = Decimal(1).scaleb(-ndigits)
    return float(Decimal(str(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def _attempts_by_user(course_id: str, problem_id: str,
                      log: Iterable[dict]) -> dict[str, list[dict]]:
    by_user: dict[str, list[dict]] = {}
    for record in log:
        if record.get("course_id") != course_id or record.get("problem_id") != problem_id:
            continue
        by_user.setdefault(record["user_id"], []).append(record)
    for attempts in by_user.values():
        attempts.sort(key=lambda r: r.get("attempt_number", 0))
    return by_user


def summarize(course_id: str, problem_id: str, log: Iterable[dict]) -> ProblemSummary:
    """One Table-style row for a problem; empty log gives attempters=0 and
    all statistics absent."""
    by_user = _attempts_by_user(course_id, problem_id, log)

    attempters = len(by_user)
    to_solve: list[int] = []
    all_attempts: list[int] = []
    first_pass_words: list[int] = []
    for attempts in by_user.values():
        first_pass = next((a for a in attempts if a.get("verdict") == "pass"), None)
        if first_pass is None:
            continue
        to_solve.append(first_pass["attempt_number"])
        all_attempts.append(len(attempts))
        first_pass_words.append(first_pass["word_count"])

    solvers = len(to_solve)
    if attempters == 0:
        return ProblemSummary(problem_id, 0, 0, None, None, None, None, None, None)

    success_pct = int(round_half_up(100.0 * solvers / attempters))
    if solvers == 0:
        return ProblemSummary(problem_id, attempters, 0, success_pct, None, None, None, None, None)

    return ProblemSummary(
        problem_id=problem_id,
        attempters=attempters,
        solvers=solvers,
        success_pct=success_pct,
        avg_submissions_to_solve=round_half_up(sum(to_solve) / solvers, 1),
        avg_submissions_all_attempts=round_half_up(sum(all_attempts) / solvers, 1),
        mean_words=round_half_up(sum(first_pass_words) / solvers, 1),
        min_words=min(first_pass_words),
        max_words=max(first_pass_words),
    )


def render_summary_row(summary: ProblemSummary) -> str:
    """Compact one-line rendering: solvers, success percentage, then the
    attempt and word statistics."""
    if summary.attempters == 0:
        raise EmptySummary(f"no submissions for problem {summary.problem_id!r}")

    def fmt1(x: float | None) -> str:
        return "-" if x is None else f"{x:.1f}"

    def fmt_int(x: int | None) -> str:
        return "-" if x is None else str(x)

    return (
        f"{summary.solvers} ({summary.success_pct}%) | "
        f"{fmt1(summary.avg_submissions_to_solve)} | {fmt1(summary.mean_words)} | "
        f"{fmt_int(summary.min_words)} | {fmt_int(summary.max_words)}"
    )


def timeline(course_id: str, problem_id: str,
             log: Iterable[dict]) -> dict[str, list[TimelinePoint]]:
    """Per-user submission series: every pass flagged, plus a marker on the
    last attempt of users who never passed."""
    by_user = _attempts_by_user(course_id, problem_id, log)
    series: dict[str, list[TimelinePoint]] = {}
    for user_id in sorted(by_user):
        attempts = by_user[user_id]
        ever_passed = any(a.get("verdict") == "pass" for a in attempts)
        points = []
        for i, attempt in enumerate(attempts):
            passed = attempt.get("verdict") == "pass"
            points.append(TimelinePoint(
                user_id=user_id,
                attempt_number=attempt["attempt_number"],
                word_count=attempt["word_count"],
                passed=passed,
                is_final_failure=(not ever_passed and i == len(attempts) - 1),
            ))
        series[user_id] = points
    return series


SUMMARY_COLUMNS = [
    "problem_id", "attempters", "solvers", "success_pct", "avg_submissions",
    "mean_words", "min_words", "max_words", "avg_submissions_all_attempts",
]
TIMELINE_COLUMNS = [
    "problem_id", "user_id", "attempt_number", "word_count", "passed", "is_final_failure",
]


def _problem_order(log: Sequence[dict], course_id: str,
                   preferred: Sequence[str] | None) -> list[str]:
    present = {r["problem_id"] for r in log if r.get("course_id") == course_id}
    ordered = [p for p in (preferred or []) if p in present]
    ordered += sorted(present - set(ordered))
    return ordered


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return f"{value:.1f}"
    return str(value)


def export_csv(kind: ExportKind | str, course_id: str, log: Sequence[dict],
               problem_order: Sequence[str] | None = None) -> str:
    """RFC-4180 CSV export of either the per-problem summary table or the
    full per-student timeline."""
    kind = ExportKind(kind)
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\r\n")
    log = list(log)

    if kind is ExportKind.SUMMARY:
        writer.writerow(SUMMARY_COLUMNS)
        for problem_id in _problem_order(log, course_id, problem_order):
            s = summarize(course_id, problem_id, log)
            writer.writerow([
                _cell(s.problem_id), _cell(s.attempters), _cell(s.solvers),
                _cell(s.success_pct), _cell(s.avg_submissions_to_solve),
                _cell(s.mean_words), _cell(s.min_words), _cell(s.max_words),
                _cell(s.avg_submissions_all_attempts),
            ])
    else:
        writer.writerow(TIMELINE_COLUMNS)
        for problem_id in _problem_order(log, course_id, problem_order):
            for user_id, points in timeline(course_id, problem_id, log).items():
                for p in points:
                    writer.writerow([
                        _cell(problem_id), _cell(user_id), _cell(p.attempt_number),
                        _cell(p.word_count), _cell(p.passed), _cell(p.is_final_failure),
                    ])
    return buffer.getvalue()


def summary_as_dicts(course_id: str, log: Sequence[dict],
                     problem_order: Sequence[str] | None = None) -> list[dict]:
    log = list(log)
    rows = []
    for problem_id in _problem_order(log, course_id, problem_order):
        s = summarize(course_id, problem_id, log)
        rows.append({
            "problem_id": s.problem_id,
            "attempters": s.attempters,
            "solvers": s.solvers,
            "success_pct": s.success_pct,
            "avg_submissions": s.avg_submissions_to_solve,
            "mean_words": s.mean_words,
            "min_words": s.min_words,
            "max_words": s.max_words,
            "avg_submissions_all_attempts": s.avg_submissions_all_attempts,
        })
    return rows


def timeline_as_dicts(course_id: str, log: Sequence[dict],
                      problem_order: Sequence[str] | None = None) -> list[dict]:
    log = list(log)
    rows = []
    for problem_id in _problem_order(log, course_id, problem_order):
        for user_id, points in timeline(course_id, problem_id, log).items():
            for p in points:
                rows.append({
                    "problem_id": problem_id,
                    "user_id": user_id,
                    "attempt_number": p.attempt_number,
                    "word_count": p.word_count,
                    "passed": p.passed,
                    "is_final_failure": p.is_final_failure,
                })
    return rows
