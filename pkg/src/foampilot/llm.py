"""Chat-completion gateway with interchangeable backends.

Two backends share one contract: an OpenAI-compatible HTTP service for real
runs and a scripted mock for offline, deterministic tests. The gateway keeps
an append-only transcript from which session token totals are computed; the
transcript carries no timestamps so identical request sequences serialize to
identical bytes.
"""

from __future__ import annotations

import json
import re
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Protocol

import requests

ROLES = ("system", "user", "assistant")
DEFAULT_TEMPERATURE = 0.6


class TransportFailure(Exception):
    pass


class ContextOverflow(Exception):
    """Backend reports the prompt exceeds its context window."""


class MockExhausted(Exception):
    def __init__(self, message_prefix: str):
        self.message_prefix = message_prefix
        super().__init__(f"no scripted response matches: {message_prefix!r}")


@dataclass(frozen=True)
class Message:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"unknown role {self.role!r}")


@dataclass
class ChatRequest:
    messages: tuple[Message, ...]
    temperature: float = DEFAULT_TEMPERATURE
    max_tokens: int | None = None
    model: str = "default"

    def __post_init__(self):
        self.messages = tuple(self.messages)
        if not self.messages:
            raise ValueError("a request needs at least one message")
        if not 0.0 <= self.temperature <= 2.0:
            raise ValueError("temperature outside [0, 2]")

    @property
    def latest_user_message(self) -> str:
        for message in reversed(self.messages):
            if message.role == "user":
                return message.content
        return ""


@dataclass(frozen=True)
class ChatResponse:
    content: str
    prompt_tokens: int
    completion_tokens: int
    finish_reason: str = "stop"

    def __post_init__(self):
        if self.prompt_tokens < 0 or self.completion_tokens < 0:
            raise ValueError("token counts must be non-negative")


class Backend(Protocol):
    def complete(self, request: ChatRequest) -> ChatResponse: ...


@dataclass
class MockEntry:
    match: str
    response: str
    prompt_tokens: int = 0
    completion_tokens: int = 0
    kind: str = "substring"  # or "regex"
    repeat: bool = False
    used: bool = field(default=False, compare=False)

    def matches(self, text: str) -> bool:
        if self.kind == "regex":
            return re.search(self.match, text) is not None
        return self.match in text

    def __post_init__(self):
        if self.kind not in ("substring", "regex"):
            raise ValueError(f"unknown matcher kind {self.kind!r}")


class MockScript:
    """Ordered matchers over the latest user message.

    Each entry answers once unless marked ``repeat``. A request no entry
    matches raises; a silent default would mask broken prompts in tests.
    """

    def __init__(self, entries: list[MockEntry], exhaustion: str = "error"):
        if exhaustion not in ("error", "repeat-last"):
            raise ValueError(f"unknown exhaustion policy {exhaustion!r}")
        self.entries = entries
        self.exhaustion = exhaustion

    @classmethod
    def load(cls, path: Path | str) -> "MockScript":
        path = Path(path)
        data = json.loads(path.read_text())
        entries = []
        for raw in data["entries"]:
            response = raw.get("response", "")
            if "response_file" in raw:
                response = (path.parent / raw["response_file"]).read_text()
            entries.append(MockEntry(
                match=raw["match"],
                response=response,
                prompt_tokens=int(raw.get("prompt_tokens", 0)),
                completion_tokens=int(raw.get("completion_tokens", 0)),
                kind=raw.get("kind", "substring"),
                repeat=bool(raw.get("repeat", False)),
            ))
        return cls(entries, exhaustion=data.get("exhaustion", "error"))

    def take(self, text: str) -> MockEntry:
        for entry in self.entries:
            if (entry.repeat or not entry.used) and entry.matches(text):
                entry.used = True
                return entry
        if self.exhaustion == "repeat-last":
            for entry in reversed(self.entries):
                if entry.used and entry.matches(text):
                    return entry
        raise MockExhausted(text[:80])


class MockBackend:
    def __init__(self, script: MockScript):
        self.script = script

    def complete(self, request: ChatRequest) -> ChatResponse:
        entry = self.script.take(request.latest_user_message)
        return ChatResponse(
            content=entry.response,
            prompt_tokens=entry.prompt_tokens,
            completion_tokens=entry.completion_tokens,
        )


_CONTEXT_MARKERS = ("context length", "context window", "maximum context",
                    "prompt is too long", "too many tokens")


class HttpBackend:
    """OpenAI-compatible chat completions over HTTP POST with bearer auth."""

    def __init__(self, endpoint: str, api_key: str = "", *,
                 timeout: float = 120.0, max_attempts: int = 3,
                 session: requests.Session | None = None,
                 sleeper: Callable[[float], None] = time.sleep):
        self.endpoint = endpoint
        self.api_key = api_key
        self.timeout = timeout
        self.max_attempts = max_attempts
        self.session = session or requests.Session()
        self.sleeper = sleeper

    def _payload(self, request: ChatRequest) -> dict:
        body = {
            "model": request.model,
            "messages": [
                {"role": m.role, "content": m.content} for m in request.messages
            ],
            "temperature": request.temperature,
        }
        if request.max_tokens is not None:
            body["max_tokens"] = request.max_tokens
        return body

    def complete(self, request: ChatRequest) -> ChatResponse:
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            if attempt:
                self.sleeper(0.5 * 2 ** (attempt - 1))
            try:
                reply = self.session.post(
                    self.endpoint, json=self._payload(request),
                    headers=headers, timeout=self.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if reply.status_code >= 500:
                last_error = TransportFailure(
                    f"server error {reply.status_code}")
                continue
            if reply.status_code >= 400:
                text = reply.text.lower()
                if any(marker in text for marker in _CONTEXT_MARKERS):
                    raise ContextOverflow(reply.text[:200])
                raise TransportFailure(
                    f"request rejected ({reply.status_code}): {reply.text[:200]}")
            return self._parse(reply.json())
        raise TransportFailure(
            f"gave up after {self.max_attempts} attempts: {last_error}")

    @staticmethod
    def _parse(data: dict) -> ChatResponse:
        try:
            choice = data["choices"][0]
            usage = data.get("usage", {})
            return ChatResponse(
                content=choice["message"]["content"],
                prompt_tokens=int(usage.get("prompt_tokens", 0)),
                completion_tokens=int(usage.get("completion_tokens", 0)),
                finish_reason=choice.get("finish_reason", "stop"),
            )
        except (KeyError, IndexError, TypeError) as exc:
            raise TransportFailure(f"malformed completion payload: {exc}") from exc


@dataclass(frozen=True)
class Exchange:
    request: ChatRequest
    response: ChatResponse


@dataclass(frozen=True)
class TokenUsage:
    prompt_tokens: int = 0
    completion_tokens: int = 0

    @property
    def total(self) -> int:
        return self.prompt_tokens + self.completion_tokens

    def __add__(self, other: "TokenUsage") -> "TokenUsage":
        return TokenUsage(self.prompt_tokens + other.prompt_tokens,
                          self.completion_tokens + other.completion_tokens)


def count_session_tokens(transcript: list[Exchange]) -> TokenUsage:
    """Sum prompt and completion counts over a transcript."""
    usage = TokenUsage()
    for exchange in transcript:
        usage = usage + TokenUsage(exchange.response.prompt_tokens,
                                   exchange.response.completion_tokens)
    return usage


class Gateway:
    """Backend wrapper that records every successful exchange."""

    def __init__(self, backend: Backend):
        self.backend = backend
        self.transcript: list[Exchange] = []

    def complete(self, request: ChatRequest) -> ChatResponse:
        response = self.backend.complete(request)
        self.transcript.append(Exchange(request, response))
        return response

    def session_tokens(self) -> TokenUsage:
        return count_session_tokens(self.transcript)

    def transcript_text(self) -> str:
        """Deterministic serialization; no timestamps, stable key order."""
        payload = [
            {
                "request": {
                    "model": x.request.model,
                    "temperature": x.request.temperature,
                    "messages": [
                        {"role": m.role, "content": m.content}
                        for m in x.request.messages
                    ],
                },
                "response": {
                    "content": x.response.content,
                    "prompt_tokens": x.response.prompt_tokens,
                    "completion_tokens": x.response.completion_tokens,
                    "finish_reason": x.response.finish_reason,
                },
            }
            for x in self.transcript
        ]
        return json.dumps(payload, indent=2, sort_keys=True)
