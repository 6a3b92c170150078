"""Exception types shared across the platform."""

from __future__ import annotations


class PromptGymError(Exception):
    """Base class for all platform errors."""


# --- course repository ---


class ManifestMissing(PromptGymError):
    def __init__(self, path: str):
        super().__init__(f"course manifest not found: {path}")
        self.path = path


class ManifestMalformed(PromptGymError):
    def __init__(self, field: str, reason: str):
        super().__init__(f"malformed manifest field {field!r}: {reason}")
        self.field = field
        self.reason = reason


class AssetMissing(PromptGymError):
    def __init__(self, path: str):
        super().__init__(f"referenced asset does not exist: {path}")
        self.path = path


class DuplicateProblemId(PromptGymError):
    def __init__(self, problem_id: str):
        super().__init__(f"duplicate problem id: {problem_id!r}")
        self.problem_id = problem_id


class IndexOutOfRange(PromptGymError, IndexError):
    pass


class UnknownCourse(PromptGymError, LookupError):
    def __init__(self, course_id: str):
        super().__init__(f"unknown course: {course_id!r}")
        self.course_id = course_id


# --- LLM gateway ---


class GatewayError(PromptGymError):
    """A generation attempt failed before any code could be judged."""


class EmptyStudentText(PromptGymError):
    pass


class ProviderTimeout(GatewayError):
    pass


class ProviderRejected(GatewayError):
    def __init__(self, status: int, body_excerpt: str = ""):
        super().__init__(f"provider rejected request (status {status}): {body_excerpt}")
        self.status = status
        self.body_excerpt = body_excerpt


class NoCodeInResponse(GatewayError):
    pass


class UnknownPrompt(GatewayError):
    pass


# --- sandbox ---


class SandboxUnavailable(PromptGymError):
    pass


class SandboxSetupFailure(SandboxUnavailable):
    pass


# --- grading ---


class LockedProblem(PromptGymError):
    pass


class PromptTooLong(PromptGymError):
    def __init__(self, limit: int, actual: int):
        super().__init__(f"prompt is {actual} words, limit is {limit}")
        self.limit = limit
        self.actual = actual


# --- persistence ---


class StorageFull(PromptGymError):
    pass


class WriteFailure(PromptGymError):
    pass


class UnknownUser(PromptGymError):
    def __init__(self, user_id: str):
        super().__init__(f"unknown user: {user_id!r}")
        self.user_id = user_id


# --- analytics ---


class EmptySummary(PromptGymError):
    pass
