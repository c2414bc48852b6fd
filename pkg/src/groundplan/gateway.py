"""Chat sessions over interchangeable completion backends.

A backend turns a message list into a completion. Three are provided: an
HTTP client for chat-completions servers, a replay backend fed from
recorded transcripts, and (in :mod:`groundplan.oracle`) a rule-based
oracle. Sessions append to their context and keep one GenerationRecord per
completion.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from collections import deque
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Iterable, Optional, Protocol, Union

import httpx

logger = logging.getLogger(__name__)

DEFAULT_CHAT_PATH = "/v1/chat/completions"


class GatewayError(RuntimeError):
    pass


class TransportError(GatewayError):
    pass


class ReplayExhausted(GatewayError):
    pass


class ReplayMismatch(GatewayError):
    pass


@dataclass
class EpisodeContext:
    """Per-episode information handed to backends.

    Only the oracle looks at ``task``/``gtsg``; ``scratch`` holds its
    per-episode memory.
    """

    task: Any = None
    env: Any = None
    gtsg: Optional[list] = None
    scratch: dict = field(default_factory=dict)


@dataclass(frozen=True)
class Completion:
    text: str
    tokens_out: Optional[int] = None
    latency: float = 0.0
    token_method: Optional[str] = None


@dataclass(frozen=True)
class GenerationRecord:
    role: str
    prompt_hash: str
    prompt_chars: int
    completion: str
    tokens_out: int
    token_method: str  # "backend" | "whitespace"
    latency: float

    def to_dict(self) -> dict:
        return asdict(self)


class Backend(Protocol):
    name: str

    def complete(
        self, messages: list[dict], role: str, context: Optional[EpisodeContext]
    ) -> Completion: ...


def prompt_hash(role: str, messages: list[dict]) -> str:
    payload = json.dumps({"role": role, "messages": messages}, sort_keys=True, ensure_ascii=False)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()


def whitespace_tokens(text: str) -> int:
    return len(text.split())


@dataclass
class ChatSession:
    backend: Backend
    role: str
    context: Optional[EpisodeContext] = None
    system: Optional[str] = None
    messages: list[dict] = field(default_factory=list)
    records: list[GenerationRecord] = field(default_factory=list)

    def __post_init__(self):
        if self.system and not self.messages:
            self.messages.append({"role": "system", "content": self.system})

    def send(self, user_message: str) -> tuple[str, GenerationRecord]:
        return send(self, user_message)


def send(session: ChatSession, user_message: str) -> tuple[str, GenerationRecord]:
    """Append ``user_message``, query the backend and append its answer.

    The user message is only kept if the backend answers, so the context
    keeps alternating user/assistant turns.
    """
    messages = session.messages + [{"role": "user", "content": user_message}]
    digest = prompt_hash(session.role, messages)
    result = session.backend.complete(messages, session.role, session.context)
    if result.tokens_out is not None:
        tokens, method = result.tokens_out, result.token_method or "backend"
    else:
        tokens, method = whitespace_tokens(result.text), "whitespace"
    record = GenerationRecord(
        role=session.role,
        prompt_hash=digest,
        prompt_chars=sum(len(m["content"]) for m in messages),
        completion=result.text,
        tokens_out=tokens,
        token_method=method,
        latency=result.latency,
    )
    session.messages = messages + [{"role": "assistant", "content": result.text}]
    session.records.append(record)
    return result.text, record


class HttpBackend:
    """Client for OpenAI-style chat-completions endpoints.

    Safe to share between threads; at most ``concurrency`` requests are in
    flight at once.
    """

    name = "http"

    def __init__(
        self,
        base_url: str,
        model: str,
        *,
        path: str = DEFAULT_CHAT_PATH,
        api_key: Optional[str] = None,
        temperature: float = 0.0,
        timeout: float = 60.0,
        max_retries: int = 2,
        backoff: float = 0.5,
        concurrency: int = 4,
        transport: Optional[httpx.BaseTransport] = None,
    ):
        if not base_url or not model:
            raise ValueError("HTTP backend needs a base URL and a model name")
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.model = model
        self.path = path
        self.temperature = temperature
        self.max_retries = max_retries
        self.backoff = backoff
        self._slots = threading.BoundedSemaphore(max(1, concurrency))
        self._client = httpx.Client(
            base_url=base_url, timeout=timeout, headers=headers, transport=transport
        )

    @classmethod
    def from_env(cls, **overrides) -> "HttpBackend":
        kwargs: dict[str, Any] = {
            "base_url": os.environ.get("GROUNDPLAN_BASE_URL", ""),
            "model": os.environ.get("GROUNDPLAN_MODEL", ""),
            "api_key": os.environ.get("GROUNDPLAN_API_KEY"),
        }
        if "GROUNDPLAN_TIMEOUT" in os.environ:
            kwargs["timeout"] = float(os.environ["GROUNDPLAN_TIMEOUT"])
        kwargs.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**kwargs)

    def close(self) -> None:
        self._client.close()

    def complete(self, messages, role, context=None) -> Completion:
        payload = {"model": self.model, "messages": messages, "temperature": self.temperature}
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            start = time.perf_counter()
            try:
                with self._slots:
                    response = self._client.post(self.path, json=payload)
            except httpx.HTTPError as exc:
                last_error = exc
                logger.warning("chat request failed (attempt %d): %s", attempt + 1, exc)
                continue
            latency = time.perf_counter() - start
            if response.status_code == 429 or response.status_code >= 500:
                last_error = TransportError(f"server answered {response.status_code}")
                logger.warning("chat request got HTTP %d (attempt %d)", response.status_code, attempt + 1)
                continue
            if response.status_code >= 400:
                raise TransportError(f"server answered {response.status_code}: {response.text[:200]}")
            try:
                data = response.json()
                text = data["choices"][0]["message"]["content"] or ""
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed chat-completions response: {exc}") from exc
            usage = data.get("usage") or {}
            tokens = usage.get("completion_tokens")
            return Completion(
                text=text,
                tokens_out=int(tokens) if tokens is not None else None,
                latency=latency,
                token_method="backend" if tokens is not None else None,
            )
        raise TransportError(
            f"chat request failed after {self.max_retries + 1} attempts: {last_error}"
        )


class ReplayBackend:
    """Serves recorded completions keyed by the hash of role and prompt.

    Any JSON-lines file whose records carry ``role_prompt_hash`` and
    ``completion`` works, so episode transcripts replay directly.
    """

    name = "replay"

    def __init__(self, records: Iterable[dict]):
        self._queues: dict[str, deque] = {}
        self._lock = threading.Lock()
        self._remaining = 0
        for rec in records:
            if "role_prompt_hash" not in rec or "completion" not in rec:
                continue
            self._queues.setdefault(rec["role_prompt_hash"], deque()).append(rec)
            self._remaining += 1

    @classmethod
    def from_file(cls, *paths: Union[str, Path]) -> "ReplayBackend":
        return cls(rec for path in paths for rec in read_jsonl(path))

    def complete(self, messages, role, context=None) -> Completion:
        digest = prompt_hash(role, messages)
        with self._lock:
            if self._remaining == 0:
                raise ReplayExhausted("all recorded completions have been used")
            queue = self._queues.get(digest)
            if queue is None:
                raise ReplayMismatch(f"no recorded completion for this {role} prompt ({digest[:12]})")
            if not queue:
                raise ReplayExhausted(f"recorded completions for this {role} prompt are used up")
            rec = queue.popleft()
            self._remaining -= 1
        return Completion(
            text=rec["completion"],
            tokens_out=int(rec["tokens_out"]),
            latency=0.0,
            token_method=rec.get("token_method", "backend"),
        )


def read_jsonl(path: Union[str, Path]) -> list[dict]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(json.loads(line))
    return out
