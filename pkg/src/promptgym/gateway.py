"""Prompt composition, code extraction, and pluggable LLM providers.

The provider surface is deliberately small: anything with a
``generate(request) -> GeneratedProgram`` method works. Two providers ship
here, a chat-completion HTTP client and a deterministic/seeded mock used
for tests and offline evaluation.
"""

from __future__ import annotations

import hashlib
import os
import re
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Mapping

import httpx

from .errors import (
    EmptyStudentText,
    NoCodeInResponse,
    ProviderRejected,
    ProviderTimeout,
    UnknownPrompt,
)
from .problems import ProblemKind, PromptProblem

GUARDRAIL = (
    "Respond with only the code. Do not include explanations, comments "
    "about usage, or any text outside the code."
)

DEFAULT_CONTENT_POINTER = "/choices/0/message/content"
DEFAULT_TEMPERATURE = 0.7

_RETRYABLE_STATUSES = {429, 500, 502, 503, 504}

_FENCE_RE = re.compile(r"```[ \t]*([A-Za-z0-9_+-]*)[ \t]*\n(.*?)```", re.DOTALL)
_LANGUAGE_TAGS = {"python", "python3", "py"}
_CODE_SHAPE_RE = re.compile(
    r"^\s*(?:"
    r"(?:def|class|import|from|if|elif|else|for|while|return|with|try|except|"
    r"finally|lambda|print|assert|yield|raise|pass|async|await|global|nonlocal|del)\b"
    r"|@\w"
    r"|#"
    r"|[A-Za-z_][A-Za-z0-9_.]*\s*(?:[=(\[]|\+=|-=|\*=|/=)"
    r")"
)


@dataclass(frozen=True)
class ProviderConfig:
    provider_kind: str = "http"
    endpoint_url: str = ""
    model_name: str = ""
    temperature: float = DEFAULT_TEMPERATURE
    api_key_env: str = "PROMPTGYM_API_KEY"
    request_timeout: float = 30.0
    max_retries: int = 2
    response_content_pointer: str = DEFAULT_CONTENT_POINTER

    def __post_init__(self):
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError(f"temperature must be in [0, 2], got {self.temperature}")
        if self.request_timeout <= 0:
            raise ValueError("request_timeout must be positive")


@dataclass(frozen=True)
class GenerationRequest:
    full_prompt: str
    problem_id: str
    attempt_nonce: int = 0

    def __post_init__(self):
        if not self.full_prompt:
            raise ValueError("full_prompt must be non-empty")


@dataclass(frozen=True)
class GeneratedProgram:
    source_code: str
    raw_response: str
    provider_metadata: Mapping[str, Any] = field(default_factory=dict)


def guardrail_for(problem: PromptProblem) -> str:
    """The fixed instruction appended to every prompt sent to the model."""
    if problem.kind is ProblemKind.FUNCTION and problem.function_name:
        return GUARDRAIL + f" The code must define a function named {problem.function_name}."
    return GUARDRAIL


def compose_llm_prompt(problem: PromptProblem, prompt_text: str) -> str:
    """Append the guardrail to an already-complete prompt."""
    return prompt_text + "\n" + guardrail_for(problem)


def build_full_prompt(problem: PromptProblem, student_text: str) -> str:
    """Compose prefix, student continuation, and guardrail into the prompt
    sent to the provider."""
    trimmed = student_text.strip()
    if not trimmed:
        raise EmptyStudentText("student text is empty")
    return compose_llm_prompt(problem, problem.prompt_prefix + " " + trimmed)


def _trim_response(text: str) -> str:
    """Drop leading blank lines and trailing whitespace; first-line
    indentation survives so extraction stays idempotent."""
    lines = text.split("\n")
    start = 0
    while start < len(lines) and not lines[start].strip():
        start += 1
    return "\n".join(lines[start:]).rstrip()


def extract_code(raw_response: str) -> str:
    """Pull runnable source out of a model response.

    Fenced blocks win; otherwise the whole response is accepted when its
    first non-blank line looks like code rather than an English sentence.
    """
    blocks = _FENCE_RE.findall(raw_response)
    if blocks:
        parts = []
        for tag, content in blocks:
            lines = content.split("\n")
            if not tag and lines and lines[0].strip().lower() in _LANGUAGE_TAGS:
                lines = lines[1:]
            parts.append("\n".join(lines).rstrip())
        code = _trim_response("\n".join(p for p in parts if p))
        if code:
            return code
        raise NoCodeInResponse("fenced blocks were empty")

    first_line = next((ln for ln in raw_response.split("\n") if ln.strip()), "")
    stripped = first_line.strip()
    if not stripped:
        raise NoCodeInResponse("response is blank")

    if _CODE_SHAPE_RE.match(stripped):
        return _trim_response(raw_response)
    alpha_space = sum(1 for c in stripped if c.isalpha() or c == " ")
    if not stripped.endswith(".") and alpha_space / len(stripped) <= 0.6:
        return _trim_response(raw_response)
    raise NoCodeInResponse("response does not look like code")


def prompt_key(full_prompt: str) -> str:
    """Stable lookup key for mock tables: SHA-256 of the exact prompt text."""
    return hashlib.sha256(full_prompt.encode("utf-8")).hexdigest()


@dataclass(frozen=True)
class MockEntry:
    """Canned response for one prompt. With ``pass_probability`` set, a
    seeded RNG keyed by the attempt nonce picks between ``code`` (the
    correct variant) and ``failing_code``."""

    code: str
    pass_probability: float | None = None
    failing_code: str | None = None

    def __post_init__(self):
        if self.pass_probability is not None:
            if not 0.0 <= self.pass_probability <= 1.0:
                raise ValueError("pass_probability must be in [0, 1]")
            if self.failing_code is None:
                raise ValueError("stochastic entries need a failing_code variant")


class MockProvider:
    """Deterministic (or seeded-stochastic) stand-in for a live LLM.

    Lookup order: exact prompt hash, then per-problem fallback. Fully
    reproducible: identical (table, request, seed) yields an identical
    response.
    """

    def __init__(self, table: Mapping[str, MockEntry] | None = None, *,
                 by_problem: Mapping[str, MockEntry] | None = None, seed: int = 0):
        self._table = dict(table or {})
        self._by_problem = dict(by_problem or {})
        self._seed = seed

    @classmethod
    def configure(cls, table: Mapping[str, MockEntry], *, seed: int = 0,
                  by_problem: Mapping[str, MockEntry] | None = None) -> "MockProvider":
        return cls(table, by_problem=by_problem, seed=seed)

    @staticmethod
    def key_for(full_prompt: str) -> str:
        return prompt_key(full_prompt)

    def _pick(self, entry: MockEntry, key: str, nonce: int) -> str:
        if entry.pass_probability is None:
            return entry.code
        digest = hashlib.sha256(f"{self._seed}|{key}|{nonce}".encode("utf-8")).digest()
        draw = int.from_bytes(digest[:8], "big") / float(1 << 64)
        return entry.code if draw < entry.pass_probability else entry.failing_code

    def generate(self, request: GenerationRequest) -> GeneratedProgram:
        key = prompt_key(request.full_prompt)
        entry = self._table.get(key)
        if entry is None:
            entry = self._by_problem.get(request.problem_id)
        if entry is None:
            raise UnknownPrompt(f"no canned response for prompt hash {key[:12]}...")
        raw = self._pick(entry, key, request.attempt_nonce)
        return GeneratedProgram(
            source_code=extract_code(raw),
            raw_response=raw,
            provider_metadata={"model": "mock", "attempt_nonce": request.attempt_nonce},
        )


def resolve_json_pointer(document: Any, pointer: str) -> Any:
    """RFC 6901 lookup, enough for picking the completion text out of a
    provider response."""
    if pointer in ("", "/"):
        return document
    node = document
    for token in pointer.lstrip("/").split("/"):
        token = token.replace("~1", "/").replace("~0", "~")
        if isinstance(node, list):
            node = node[int(token)]
        elif isinstance(node, dict):
            node = node[token]
        else:
            raise KeyError(token)
    return node


class HttpChatProvider:
    """Chat-completion-style HTTP client.

    One wire shape for every endpoint: ``{model, temperature, messages}``
    out, completion text at a configurable JSON-pointer path back. Retries
    transport errors and retryable statuses with exponential backoff.
    """

    def __init__(self, config: ProviderConfig, *,
                 client: httpx.Client | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 backoff_base: float = 0.5):
        self.config = config
        self._client = client or httpx.Client(timeout=config.request_timeout)
        self._sleep = sleep
        self._backoff_base = backoff_base

    def _headers(self) -> dict[str, str]:
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env, "")
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        return headers

    def generate(self, request: GenerationRequest) -> GeneratedProgram:
        payload = {
            "model": self.config.model_name,
            "temperature": self.config.temperature,
            "messages": [{"role": "user", "content": request.full_prompt}],
        }
        attempts = self.config.max_retries + 1
        last_error: Exception | None = None
        response = None
        for attempt in range(attempts):
            if attempt:
                self._sleep(self._backoff_base * (2 ** (attempt - 1)))
            try:
                response = self._client.post(
                    self.config.endpoint_url, json=payload, headers=self._headers()
                )
            except httpx.TimeoutException as exc:
                last_error = exc
                continue
            except httpx.HTTPError as exc:
                last_error = exc
                continue
            if response.status_code in _RETRYABLE_STATUSES:
                last_error = None
                continue
            break
        else:
            if isinstance(last_error, httpx.TimeoutException):
                raise ProviderTimeout(str(last_error)) from last_error
            if last_error is not None:
                raise ProviderRejected(0, str(last_error)) from last_error
            assert response is not None
            raise ProviderRejected(response.status_code, response.text[:200])

        if response.status_code != 200:
            raise ProviderRejected(response.status_code, response.text[:200])

        try:
            body = response.json()
            text = resolve_json_pointer(body, self.config.response_content_pointer)
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise ProviderRejected(response.status_code, f"unparseable body: {exc}") from exc
        if not isinstance(text, str):
            raise ProviderRejected(response.status_code, "completion content is not text")

        metadata: dict[str, Any] = {"model": self.config.model_name}
        if isinstance(body, dict) and isinstance(body.get("usage"), dict):
            metadata["usage"] = body["usage"]
        return GeneratedProgram(
            source_code=extract_code(text),
            raw_response=text,
            provider_metadata=metadata,
        )


def make_provider(config: ProviderConfig):
    if config.provider_kind == "http":
        return HttpChatProvider(config)
    raise ValueError(f"cannot build provider of kind {config.provider_kind!r} from config alone")


def request_generation(request: GenerationRequest, provider_or_config) -> GeneratedProgram:
    """Resolve a provider (building an HTTP client from a bare config if
    needed) and run one generation."""
    if isinstance(provider_or_config, ProviderConfig):
        provider = make_provider(provider_or_config)
    else:
        provider = provider_or_config
    return provider.generate(request)
