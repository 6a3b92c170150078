"""Durable append-only storage: submission logs, robustness runs, users,
and progression state.

Submissions land in per-course JSON-Lines logs (one record per line) so
analytics can always be rebuilt by replay. Users and progress are small
JSON snapshots rewritten atomically. No database, by design.
"""

from __future__ import annotations

import errno
import hashlib
import hmac
import json
import logging
import os
import threading
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

from .errors import StorageFull, UnknownUser, WriteFailure

logger = logging.getLogger(__name__)

SCHEMA_VERSION = 1

_USERS_FILE = "users.json"
_PROGRESS_FILE = "progress.json"


class Role(str, Enum):
    STUDENT = "student"
    INSTRUCTOR = "instructor"


@dataclass(frozen=True)
class UserRecord:
    user_id: str
    display_name: str
    role: Role
    auth_token_hash: str


@dataclass(frozen=True)
class ProgressState:
    user_id: str
    course_id: str
    highest_unlocked_index: int = 0
    solved: frozenset[str] = field(default_factory=frozenset)


def hash_secret(secret: str) -> str:
    return hashlib.sha256(secret.encode("utf-8")).hexdigest()


def _atomic_write_json(path: Path, payload) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    os.replace(tmp, path)


class Store:
    """Single-writer append log plus JSON snapshots, guarded by one lock.

    Reload-safe: a truncated final line (interrupted write) is skipped with
    a warning and every earlier record stays intact.
    """

    def __init__(self, data_dir: str | Path):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.RLock()
        self._records: list[dict] = []
        self._ids: set[str] = set()
        self._users: dict[str, UserRecord] = {}
        self._progress: dict[str, dict[str, dict]] = {}
        self._id_counter = 0
        self._load()

    # -- loading --

    def _load(self) -> None:
        for log_path in sorted(self.data_dir.glob("submissions-*.jsonl")):
            self._replay_log(log_path)
        self._records.sort(key=lambda r: (r.get("submitted_at", ""), r.get("submission_id", "")))

        users_path = self.data_dir / _USERS_FILE
        if users_path.is_file():
            raw = json.loads(users_path.read_text(encoding="utf-8"))
            for user_id, u in raw.items():
                self._users[user_id] = UserRecord(
                    user_id=user_id,
                    display_name=u["display_name"],
                    role=Role(u["role"]),
                    auth_token_hash=u["auth_token_hash"],
                )

        progress_path = self.data_dir / _PROGRESS_FILE
        if progress_path.is_file():
            self._progress = json.loads(progress_path.read_text(encoding="utf-8"))

    def _replay_log(self, path: Path) -> None:
        lines = path.read_text(encoding="utf-8").split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        for lineno, line in enumerate(lines, start=1):
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                logger.warning("skipping unparseable line %d of %s", lineno, path.name)
                continue
            if not isinstance(record, dict) or "submission_id" not in record:
                logger.warning("skipping malformed record at line %d of %s", lineno, path.name)
                continue
            self._register(record)

    def _register(self, record: dict) -> None:
        sid = record["submission_id"]
        self._ids.add(sid)
        self._records.append(record)
        if sid.startswith("sub-"):
            try:
                self._id_counter = max(self._id_counter, int(sid[4:]))
            except ValueError:
                pass

    # -- submissions --

    def _log_path(self, course_id: str) -> Path:
        return self.data_dir / f"submissions-{course_id}.jsonl"

    def append_submission(self, record: dict) -> str:
        """Persist one submission record durably; returns its id.

        Records without a ``submission_id`` get the next sequential one.
        Duplicate ids are rejected, and records are never mutated after
        this point.
        """
        if "course_id" not in record:
            raise WriteFailure("record is missing course_id")
        with self._lock:
            record = dict(record)
            record.setdefault("schema_version", SCHEMA_VERSION)
            sid = record.get("submission_id")
            if sid is None:
                self._id_counter += 1
                sid = f"sub-{self._id_counter:08d}"
                record["submission_id"] = sid
            elif sid in self._ids:
                raise WriteFailure(f"duplicate submission_id {sid!r}")
            self._write_line(self._log_path(record["course_id"]), record)
            self._register(record)
            self._records.sort(
                key=lambda r: (r.get("submitted_at", ""), r.get("submission_id", ""))
            )
            return sid

    def append_robustness_run(self, record: dict) -> None:
        if "course_id" not in record:
            raise WriteFailure("record is missing course_id")
        with self._lock:
            record = dict(record)
            record.setdefault("schema_version", SCHEMA_VERSION)
            self._write_line(self.data_dir / f"robustness-{record['course_id']}.jsonl", record)

    @staticmethod
    def _write_line(path: Path, record: dict) -> None:
        line = json.dumps(record, sort_keys=True, ensure_ascii=False)
        try:
            with open(path, "a", encoding="utf-8") as handle:
                handle.write(line + "\n")
                handle.flush()
                os.fsync(handle.fileno())
        except OSError as exc:
            if exc.errno == errno.ENOSPC:
                raise StorageFull(str(exc)) from exc
            raise WriteFailure(str(exc)) from exc

    def query_submissions(self, *, course_id: str | None = None,
                          problem_id: str | None = None,
                          user_id: str | None = None) -> list[dict]:
        """All matching records ordered by (submitted_at, submission_id)."""
        with self._lock:
            return [
                dict(r)
                for r in self._records
                if (course_id is None or r.get("course_id") == course_id)
                and (problem_id is None or r.get("problem_id") == problem_id)
                and (user_id is None or r.get("user_id") == user_id)
            ]

    # -- users --

    def add_user(self, user_id: str, display_name: str, role: Role, secret: str) -> UserRecord:
        with self._lock:
            record = UserRecord(
                user_id=user_id,
                display_name=display_name,
                role=Role(role),
                auth_token_hash=hash_secret(secret),
            )
            self._users[user_id] = record
            self._save_users()
            return record

    def get_user(self, user_id: str) -> UserRecord | None:
        with self._lock:
            return self._users.get(user_id)

    def verify_login(self, user_id: str, secret: str) -> bool:
        user = self.get_user(user_id)
        if user is None:
            return False
        return hmac.compare_digest(user.auth_token_hash, hash_secret(secret))

    def _save_users(self) -> None:
        payload = {
            u.user_id: {
                "display_name": u.display_name,
                "role": u.role.value,
                "auth_token_hash": u.auth_token_hash,
            }
            for u in self._users.values()
        }
        _atomic_write_json(self.data_dir / _USERS_FILE, payload)

    # -- progress --

    def load_progress(self, user_id: str, course_id: str) -> ProgressState:
        with self._lock:
            if user_id not in self._users:
                raise UnknownUser(user_id)
            raw = self._progress.get(user_id, {}).get(course_id)
            if raw is None:
                return ProgressState(user_id=user_id, course_id=course_id)
            return ProgressState(
                user_id=user_id,
                course_id=course_id,
                highest_unlocked_index=raw["highest_unlocked_index"],
                solved=frozenset(raw["solved"]),
            )

    def save_progress(self, state: ProgressState) -> None:
        with self._lock:
            if state.user_id not in self._users:
                raise UnknownUser(state.user_id)
            self._progress.setdefault(state.user_id, {})[state.course_id] = {
                "highest_unlocked_index": state.highest_unlocked_index,
                "solved": sorted(state.solved),
            }
            _atomic_write_json(self.data_dir / _PROGRESS_FILE, self._progress)


def progress_from_log(records: list[dict], course) -> dict[str, ProgressState]:
    """Recompute every user's progress for a course purely from the
    submission log; the stored snapshot must always agree with this."""
    passed: dict[str, set[str]] = {}
    for record in records:
        if record.get("course_id") != course.course_id:
            continue
        user = record["user_id"]
        passed.setdefault(user, set())
        if record.get("verdict") == "pass":
            passed[user].add(record["problem_id"])
    states = {}
    for user, solved in passed.items():
        frontier = 0
        while frontier < len(course.problems) and course.problems[frontier].problem_id in solved:
            frontier += 1
        states[user] = ProgressState(
            user_id=user,
            course_id=course.course_id,
            highest_unlocked_index=frontier,
            solved=frozenset(solved),
        )
    return states
