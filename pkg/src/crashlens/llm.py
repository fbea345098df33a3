"""Chat-completion client with deterministic record/replay transcripts.

The client speaks a plain chat contract (message list in, text out) against
any HTTP endpoint with that shape. Every exchange is keyed by a content
digest of the request and parameters; replay mode serves recorded responses
byte-identically and fails loudly on divergence, which is what the offline
test suite runs on.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx

__all__ = [
    "ChatParams",
    "ChatExchange",
    "Transcript",
    "ChatClient",
    "ClientError",
    "ReplayDivergenceError",
    "StructuredOutputError",
    "request_digest",
    "estimate_tokens",
    "parse_structured",
    "http_endpoint",
]

DEFAULT_TEMPERATURE = 0.0
DEFAULT_MAX_OUTPUT_TOKENS = 4096
DEFAULT_CONTEXT_BUDGET = 128_000


class ClientError(RuntimeError):
    pass


class ReplayDivergenceError(AssertionError):
    pass


class StructuredOutputError(ValueError):
    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw


@dataclass(frozen=True)
class ChatParams:
    model: str
    temperature: float = DEFAULT_TEMPERATURE
    max_output_tokens: int = DEFAULT_MAX_OUTPUT_TOKENS


@dataclass
class ChatExchange:
    request: list[dict]
    params: ChatParams
    response: str
    usage: dict
    request_digest: str

    def to_json(self) -> str:
        return json.dumps(
            {
                "digest": self.request_digest,
                "params": {
                    "model": self.params.model,
                    "temperature": self.params.temperature,
                    "max_output_tokens": self.params.max_output_tokens,
                },
                "request": self.request,
                "response": self.response,
                "usage": self.usage,
            },
            ensure_ascii=False,
            sort_keys=True,
        )

    @staticmethod
    def from_json(line: str) -> "ChatExchange":
        data = json.loads(line)
        params = ChatParams(
            model=data["params"]["model"],
            temperature=data["params"]["temperature"],
            max_output_tokens=data["params"]["max_output_tokens"],
        )
        return ChatExchange(
            request=data["request"],
            params=params,
            response=data["response"],
            usage=data.get("usage", {}),
            request_digest=data["digest"],
        )


def request_digest(messages: list[dict], params: ChatParams) -> str:
    """Content hash of request plus parameters; stable across processes and platforms."""
    canonical = json.dumps(
        {
            "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
            "model": params.model,
            "temperature": params.temperature,
            "max_output_tokens": params.max_output_tokens,
        },
        sort_keys=True,
        ensure_ascii=False,
        separators=(",", ":"),
    )
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class Transcript:
    """Ordered exchange log; `record` appends, `replay` serves in order."""

    def __init__(self, mode: str, path: str | Path | None = None):
        if mode not in ("record", "replay"):
            raise ValueError(f"unknown transcript mode {mode!r}")
        self.mode = mode
        self.path = Path(path) if path is not None else None
        self.exchanges: list[ChatExchange] = []
        self._cursor = 0
        self._lock = threading.Lock()
        if mode == "replay":
            if self.path is None:
                raise ValueError("replay transcripts need a path")
            text = self.path.read_bytes().decode("utf-8")
            self.exchanges = [ChatExchange.from_json(line) for line in text.splitlines() if line]

    @classmethod
    def recording(cls, path: str | Path | None = None) -> "Transcript":
        return cls("record", path)

    @classmethod
    def replay(cls, path: str | Path) -> "Transcript":
        return cls("replay", path)

    def append(self, exchange: ChatExchange) -> None:
        with self._lock:
            self.exchanges.append(exchange)
            if self.path is not None:
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(exchange.to_json() + "\n")

    def next_for(self, digest: str) -> ChatExchange:
        with self._lock:
            if self._cursor >= len(self.exchanges):
                raise ReplayDivergenceError(
                    f"transcript exhausted: no recorded exchange for digest {digest[:12]}"
                )
            exchange = self.exchanges[self._cursor]
            if exchange.request_digest != digest:
                raise ReplayDivergenceError(
                    "replay divergence at exchange "
                    f"{self._cursor}: expected {exchange.request_digest[:12]}, got {digest[:12]}"
                )
            self._cursor += 1
            return exchange

    def save(self, path: str | Path) -> None:
        Path(path).write_bytes(
            ("".join(ex.to_json() + "\n" for ex in self.exchanges)).encode("utf-8")
        )


Endpoint = Callable[[list[dict], ChatParams], tuple[str, dict]]


def http_endpoint(base_url: str, credential_env: str, timeout: float = 120.0) -> Endpoint:
    """Endpoint speaking the HTTP chat-completion contract.

    The credential is read from the named environment variable at call time
    and never appears in logs or transcripts.
    """

    def call(messages: list[dict], params: ChatParams) -> tuple[str, dict]:
        headers = {}
        credential = os.environ.get(credential_env, "")
        if credential:
            headers["Authorization"] = f"Bearer {credential}"
        payload = {
            "model": params.model,
            "messages": messages,
            "temperature": params.temperature,
            "max_tokens": params.max_output_tokens,
        }
        resp = httpx.post(
            base_url.rstrip("/") + "/chat/completions",
            json=payload,
            headers=headers,
            timeout=timeout,
        )
        resp.raise_for_status()
        data = resp.json()
        text = data["choices"][0]["message"]["content"]
        usage = data.get("usage", {})
        return text, {
            "prompt_tokens": usage.get("prompt_tokens", 0),
            "completion_tokens": usage.get("completion_tokens", 0),
        }

    return call


@dataclass
class ChatClient:
    """Shareable chat client; record mode calls the endpoint, replay never does."""

    transcript: Transcript
    endpoint: Endpoint | None = None
    max_attempts: int = 3
    backoff_base: float = 0.5
    sleep: Callable[[float], None] = time.sleep
    max_in_flight: int = 4
    _gate: threading.Semaphore = field(init=False, repr=False)

    def __post_init__(self) -> None:
        self._gate = threading.Semaphore(self.max_in_flight)

    def complete(self, messages: list[dict], params: ChatParams) -> str:
        digest = request_digest(messages, params)
        if self.transcript.mode == "replay":
            return self.transcript.next_for(digest).response
        if self.endpoint is None:
            raise ClientError("record mode requires an endpoint")
        last_error: Exception | None = None
        for attempt in range(self.max_attempts):
            try:
                with self._gate:
                    response, usage = self.endpoint(messages, params)
                self.transcript.append(
                    ChatExchange(
                        request=[{"role": m["role"], "content": m["content"]} for m in messages],
                        params=params,
                        response=response,
                        usage=usage,
                        request_digest=digest,
                    )
                )
                return response
            except Exception as exc:  # transport/endpoint failure
                last_error = exc
                if attempt + 1 < self.max_attempts:
                    self.sleep(self.backoff_base * (2**attempt))
        raise ClientError(f"endpoint failed after {self.max_attempts} attempts: {last_error}")

    @property
    def exchanges(self) -> list[ChatExchange]:
        return self.transcript.exchanges


# ---------------------------------------------------------------------------
# Token estimation


def estimate_tokens(text: str, tokenizer: Callable[[str], int] | None = None) -> int:
    """Default estimator: ceil(byte length / 4); monotone in text length.

    A model-specific tokenizer callable takes precedence when configured.
    """
    if tokenizer is not None:
        return tokenizer(text)
    return math.ceil(len(text.encode("utf-8")) / 4)


# ---------------------------------------------------------------------------
# Structured output parsing

_FENCE_RE = re.compile(r"```(?:json)?\s*\n(.*?)```", re.DOTALL)


def _candidate_documents(response: str):
    stripped = response.strip()
    if stripped:
        yield stripped
    for m in _FENCE_RE.finditer(response):
        yield m.group(1).strip()
    start = response.find("{")
    while start != -1:
        depth = 0
        in_string = False
        escape = False
        for i in range(start, len(response)):
            ch = response[i]
            if in_string:
                if escape:
                    escape = False
                elif ch == "\\":
                    escape = True
                elif ch == '"':
                    in_string = False
                continue
            if ch == '"':
                in_string = True
            elif ch == "{":
                depth += 1
            elif ch == "}":
                depth -= 1
                if depth == 0:
                    yield response[start : i + 1]
                    break
        start = response.find("{", start + 1)


def parse_structured(response: str, required_fields: list[str]) -> dict:
    """Extract the first well-formed JSON object from a model reply.

    Tolerates surrounding prose and code fences. Missing required fields or
    no parseable document raise StructuredOutputError carrying the raw reply.
    """
    for candidate in _candidate_documents(response):
        try:
            doc = json.loads(candidate)
        except json.JSONDecodeError:
            continue
        if not isinstance(doc, dict):
            continue
        missing = [f for f in required_fields if f not in doc]
        if missing:
            raise StructuredOutputError(
                f"structured reply missing required fields: {', '.join(missing)}", raw=response
            )
        return doc
    raise StructuredOutputError("no structured document found in reply", raw=response)
