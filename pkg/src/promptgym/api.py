"""HTTP surface for the student console and instructor tooling.

All endpoints live under ``/api/`` with bearer-token auth; image assets
are served under ``/assets/``. Problem views never contain test data; a
submission response reveals at most the first failing test.
"""

from __future__ import annotations

import secrets
import threading
from datetime import datetime, timedelta
from pathlib import Path
from typing import Callable

from fastapi import Depends, FastAPI, HTTPException, Query, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.responses import FileResponse, JSONResponse, PlainTextResponse
from pydantic import BaseModel

from .analytics import (
    ExportKind,
    export_csv,
    summary_as_dicts,
    timeline_as_dicts,
)
from .errors import (
    EmptyStudentText,
    IndexOutOfRange,
    LockedProblem,
    PromptTooLong,
    ProviderTimeout,
    UnknownCourse,
    UnknownUser,
)
from .grading import GradingEngine, feedback_for, utcnow
from .sandbox import Verdict
from .storage import Role, Store

DEFAULT_TOKEN_TTL = timedelta(hours=12)


class LoginBody(BaseModel):
    user_id: str
    secret: str


class SubmissionBody(BaseModel):
    student_text: str


class _TokenTable:
    def __init__(self, clock: Callable[[], datetime], ttl: timedelta):
        self._clock = clock
        self._ttl = ttl
        self._tokens: dict[str, tuple[str, datetime]] = {}
        self._lock = threading.Lock()

    def issue(self, user_id: str) -> str:
        token = secrets.token_urlsafe(24)
        with self._lock:
            self._tokens[token] = (user_id, self._clock() + self._ttl)
        return token

    def resolve(self, token: str) -> str | None:
        with self._lock:
            entry = self._tokens.get(token)
            if entry is None:
                return None
            user_id, expiry = entry
            if self._clock() >= expiry:
                del self._tokens[token]
                return None
            return user_id


def create_app(engine: GradingEngine, store: Store, *,
               clock: Callable[[], datetime] = utcnow,
               token_ttl: timedelta = DEFAULT_TOKEN_TTL,
               ui_dir: str | Path | None = None) -> FastAPI:
    app = FastAPI(title="promptgym", docs_url=None, redoc_url=None)
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    tokens = _TokenTable(clock, token_ttl)

    def authenticate(request: Request, token_param: str | None = None):
        header = request.headers.get("Authorization", "")
        token = ""
        if header.startswith("Bearer "):
            token = header[len("Bearer "):]
        elif token_param:
            token = token_param
        user_id = tokens.resolve(token) if token else None
        if user_id is None:
            raise HTTPException(status_code=401, detail="missing or expired token")
        user = store.get_user(user_id)
        if user is None:
            raise HTTPException(status_code=401, detail="unknown user")
        return user

    def current_user(request: Request):
        return authenticate(request)

    @app.post("/api/login")
    def login(body: LoginBody):
        if not store.verify_login(body.user_id, body.secret):
            raise HTTPException(status_code=401, detail="invalid credentials")
        return {"token": tokens.issue(body.user_id)}

    @app.get("/api/courses")
    def list_courses(user=Depends(current_user)):
        out = []
        for course in engine.courses.values():
            progress = store.load_progress(user.user_id, course.course_id)
            out.append({
                "course_id": course.course_id,
                "title": course.title,
                "problem_count": len(course.problems),
                "highest_unlocked_index": min(
                    progress.highest_unlocked_index, len(course.problems) - 1
                ) if course.problems else 0,
                "solved": sorted(progress.solved),
            })
        return out

    def _course_or_404(course_id: str):
        try:
            return engine.course(course_id)
        except UnknownCourse:
            raise HTTPException(status_code=404, detail="unknown course") from None

    @app.get("/api/courses/{course_id}/problems/{index}")
    def problem_view(course_id: str, index: int, user=Depends(current_user)):
        course = _course_or_404(course_id)
        try:
            accessible = engine.can_access(user.user_id, course_id, index)
        except IndexOutOfRange:
            raise HTTPException(status_code=404, detail="unknown problem") from None
        if not accessible:
            raise HTTPException(status_code=403, detail="problem is locked")
        problem = course.problems[index]
        progress = store.load_progress(user.user_id, course_id)
        return {
            "problem_id": problem.problem_id,
            "kind": problem.kind.value,
            "prompt_prefix": problem.prompt_prefix,
            "function_name": problem.function_name,
            "image_url": f"/assets/{course_id}/{problem.image_asset.removeprefix('assets/')}",
            "max_prompt_words": problem.max_prompt_words,
            "solved": problem.problem_id in progress.solved,
            "index": index,
            "problem_count": len(course.problems),
        }

    @app.post("/api/courses/{course_id}/problems/{index}/submissions")
    def submit(course_id: str, index: int, body: SubmissionBody, user=Depends(current_user)):
        _course_or_404(course_id)
        try:
            submission = engine.submit(user.user_id, course_id, index, body.student_text)
        except LockedProblem:
            raise HTTPException(status_code=403, detail="problem is locked") from None
        except IndexOutOfRange:
            raise HTTPException(status_code=404, detail="unknown problem") from None
        except EmptyStudentText:
            raise HTTPException(status_code=422, detail="student text is empty") from None
        except PromptTooLong as exc:
            raise HTTPException(
                status_code=422,
                detail={"error": "prompt too long", "limit": exc.limit, "actual": exc.actual},
            ) from None
        except ProviderTimeout:
            raise HTTPException(
                status_code=502, detail="the code generation provider timed out"
            ) from None

        result = submission.result
        unlocked_next = (
            result.verdict is Verdict.PASS
            and index + 1 < len(engine.course(course_id).problems)
        )
        first_failure = None
        if result.first_failure is not None:
            first_failure = {
                "expected_display": result.first_failure.expected_display,
                "actual_display": result.first_failure.actual_display,
            }
        return {
            "verdict": result.verdict.value,
            "feedback_message": feedback_for(result),
            "generated_code": submission.generated.source_code if submission.generated else None,
            "first_failure": first_failure,
            "unlocked_next": unlocked_next,
            "attempt_number": submission.attempt_number,
            "word_count": submission.word_count,
        }

    @app.get("/api/courses/{course_id}/analytics")
    def analytics_export(course_id: str, kind: str = Query(...),
                         format: str = Query("csv"), user=Depends(current_user)):
        if user.role is not Role.INSTRUCTOR:
            raise HTTPException(status_code=403, detail="instructor role required")
        course = _course_or_404(course_id)
        try:
            export_kind = ExportKind(kind)
        except ValueError:
            raise HTTPException(status_code=400, detail=f"unknown kind {kind!r}") from None
        log = store.query_submissions(course_id=course_id)
        order = [p.problem_id for p in course.problems]
        if format == "json":
            rows = (
                summary_as_dicts(course_id, log, order)
                if export_kind is ExportKind.SUMMARY
                else timeline_as_dicts(course_id, log, order)
            )
            return JSONResponse(rows)
        if format != "csv":
            raise HTTPException(status_code=400, detail=f"unknown format {format!r}")
        return PlainTextResponse(
            export_csv(export_kind, course_id, log, order), media_type="text/csv"
        )

    @app.get("/assets/{course_id}/{asset_path:path}")
    def asset(course_id: str, asset_path: str, request: Request,
              token: str | None = Query(None)):
        authenticate(request, token)
        course = _course_or_404(course_id)
        assets_root = (course.root / "assets").resolve()
        candidate = (assets_root / asset_path).resolve()
        if not str(candidate).startswith(str(assets_root) + "/") and candidate != assets_root:
            raise HTTPException(status_code=404, detail="no such asset")
        if not candidate.is_file():
            raise HTTPException(status_code=404, detail="no such asset")
        return FileResponse(candidate)

    @app.exception_handler(UnknownUser)
    def _unknown_user(request: Request, exc: UnknownUser):
        return JSONResponse(status_code=401, content={"detail": "unknown user"})

    if ui_dir is not None:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=str(ui_dir), html=True), name="ui")

    return app
