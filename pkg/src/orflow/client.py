"""Chat-completion clients for the Reasoner, Intervener, and Annotator roles.

`HttpChatClient` speaks the standard chat-completions POST protocol against
per-role endpoints, with bounded retries, a token-bucket rate limiter, and
stop-sequence support. `ScriptedClient` is a fully deterministic stand-in
that replays a fixed script and emulates stop sequences and token caps, so
every orchestration path can be tested without a live endpoint.
"""

from __future__ import annotations

import json
import os
import threading
import time
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Optional, Sequence

import requests

from .tokens import DEFAULT_TOKENIZER, Tokenizer


class Role(str, Enum):
    REASONER = "reasoner"
    INTERVENER = "intervener"
    ANNOTATOR = "annotator"


class MessageRole(str, Enum):
    SYSTEM = "system"
    USER = "user"
    ASSISTANT = "assistant"


class Finish(str, Enum):
    STOP = "stop"          # a stop sequence fired
    LENGTH = "length"      # the token cap cut generation
    END_OF_TURN = "end"    # the model finished naturally


class ClientError(Exception):
    pass


class EndpointUnavailable(ClientError):
    pass


class RateLimited(ClientError):
    pass


class MalformedResponse(ClientError):
    pass


class ScriptExhausted(ClientError):
    pass


class ScriptMismatch(ClientError):
    pass


@dataclass(frozen=True)
class SamplingConfig:
    temperature: float = 0.6
    top_p: float = 0.95
    max_tokens: int = 16384
    stop_sequences: tuple[str, ...] = ()
    seed: Optional[int] = None

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if not (0 < self.top_p <= 1):
            raise ValueError("top_p must be in (0, 1]")
        if self.max_tokens < 1:
            raise ValueError("max_tokens must be >= 1")
        object.__setattr__(self, "stop_sequences", tuple(self.stop_sequences))


@dataclass(frozen=True)
class ChatMessage:
    role: MessageRole
    content: str

    def __post_init__(self):
        # Empty content is only meaningful as an assistant prefill stub.
        if not self.content and self.role is not MessageRole.ASSISTANT:
            raise ValueError(f"{self.role.value} message content must be non-empty")


@dataclass(frozen=True)
class Completion:
    text: str
    stop_hit: Optional[str]
    token_count: int
    finish: Finish

    def __post_init__(self):
        if self.finish is Finish.STOP and self.stop_hit is None:
            raise ValueError("finish=stop requires stop_hit")


class TokenBucket:
    """Requests-per-minute limiter; the one synchronized point in a client."""

    def __init__(self, requests_per_minute: float, max_wait: float = 60.0):
        self.rate = requests_per_minute / 60.0
        self.capacity = max(1.0, requests_per_minute / 60.0)
        self.max_wait = max_wait
        self._tokens = self.capacity
        self._last = time.monotonic()
        self._lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self._lock:
                now = time.monotonic()
                self._tokens = min(
                    self.capacity, self._tokens + (now - self._last) * self.rate
                )
                self._last = now
                if self._tokens >= 1.0:
                    self._tokens -= 1.0
                    return
                wait = (1.0 - self._tokens) / self.rate
            if wait > self.max_wait:
                raise RateLimited(f"rate limiter wait of {wait:.1f}s exceeds budget")
            time.sleep(min(wait, 0.2))


@dataclass(frozen=True)
class EndpointConfig:
    """Where one role's model lives. URL and key come from the environment."""

    base_url: str
    model: str
    path: str = "/v1/chat/completions"
    api_key: Optional[str] = None
    requests_per_minute: Optional[float] = None
    max_retries: int = 3
    backoff_base: float = 1.0
    request_timeout: float = 600.0

    @classmethod
    def from_env(cls, role: Role, model: Optional[str] = None, **kwargs) -> "EndpointConfig":
        prefix = f"ORFLOW_{role.value.upper()}"
        base_url = os.environ.get(f"{prefix}_BASE_URL") or os.environ.get(
            "ORFLOW_BASE_URL"
        )
        if not base_url:
            raise EndpointUnavailable(
                f"no endpoint configured for {role.value}: set {prefix}_BASE_URL"
            )
        api_key = os.environ.get(f"{prefix}_API_KEY") or os.environ.get(
            "ORFLOW_API_KEY"
        )
        model = model or os.environ.get(f"{prefix}_MODEL") or os.environ.get(
            "ORFLOW_MODEL", ""
        )
        return cls(base_url=base_url, model=model, api_key=api_key, **kwargs)


class HttpChatClient:
    """Routes completions to per-role chat-completions endpoints."""

    def __init__(
        self,
        endpoints: dict[Role, EndpointConfig],
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
        session: Optional[requests.Session] = None,
        sleep=time.sleep,
    ):
        self.endpoints = dict(endpoints)
        self.tokenizer = tokenizer
        self._session = session or requests.Session()
        self._sleep = sleep
        self._limiters: dict[Role, TokenBucket] = {}
        for role, cfg in self.endpoints.items():
            if cfg.requests_per_minute:
                self._limiters[role] = TokenBucket(cfg.requests_per_minute)

    def complete(
        self,
        messages: Sequence[ChatMessage],
        cfg: SamplingConfig,
        role_tag: Role = Role.REASONER,
    ) -> Completion:
        if not messages:
            raise ValueError("messages must be non-empty")
        endpoint = self.endpoints.get(role_tag)
        if endpoint is None:
            raise EndpointUnavailable(f"no endpoint configured for {role_tag.value}")
        limiter = self._limiters.get(role_tag)
        if limiter is not None:
            limiter.acquire()

        payload = {
            "model": endpoint.model,
            "messages": [{"role": m.role.value, "content": m.content} for m in messages],
            "temperature": cfg.temperature,
            "top_p": cfg.top_p,
            "max_tokens": cfg.max_tokens,
        }
        if cfg.stop_sequences:
            payload["stop"] = list(cfg.stop_sequences)
        if cfg.seed is not None:
            payload["seed"] = cfg.seed
        headers = {"Content-Type": "application/json"}
        if endpoint.api_key:
            headers["Authorization"] = f"Bearer {endpoint.api_key}"
        url = endpoint.base_url.rstrip("/") + endpoint.path

        last_error: Optional[Exception] = None
        rate_limited = False
        for attempt in range(endpoint.max_retries):
            if attempt:
                self._sleep(endpoint.backoff_base * 2 ** (attempt - 1))
            try:
                response = self._session.post(
                    url, json=payload, headers=headers, timeout=endpoint.request_timeout
                )
            except requests.RequestException as exc:
                last_error = exc
                continue
            if response.status_code == 429:
                rate_limited = True
                last_error = ClientError("429 Too Many Requests")
                continue
            if response.status_code >= 500:
                last_error = ClientError(f"server error {response.status_code}")
                continue
            if response.status_code != 200:
                raise MalformedResponse(
                    f"unexpected status {response.status_code}: {response.text[:200]}"
                )
            return self._parse(response, cfg)
        if rate_limited:
            raise RateLimited(f"rate limit persisted after {endpoint.max_retries} attempts")
        raise EndpointUnavailable(
            f"endpoint {url} failed after {endpoint.max_retries} attempts: {last_error}"
        )

    def _parse(self, response, cfg: SamplingConfig) -> Completion:
        try:
            data = response.json()
            choice = data["choices"][0]
            text = choice["message"]["content"]
            if text is None:
                text = ""
            finish_reason = choice.get("finish_reason")
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"cannot parse completion: {exc}") from None

        stop_hit = None
        if finish_reason == "length":
            finish = Finish.LENGTH
        elif finish_reason == "stop" and cfg.stop_sequences:
            # The standard schema does not say which stop string fired; some
            # servers expose it as `stop_reason`. With a single configured
            # stop sequence the answer is unambiguous anyway.
            reported = choice.get("stop_reason")
            if isinstance(reported, str) and reported in cfg.stop_sequences:
                stop_hit = reported
                finish = Finish.STOP
            elif len(cfg.stop_sequences) == 1:
                stop_hit = cfg.stop_sequences[0]
                finish = Finish.STOP
            else:
                finish = Finish.END_OF_TURN
        else:
            finish = Finish.END_OF_TURN

        usage = data.get("usage") or {}
        token_count = usage.get("completion_tokens")
        if not isinstance(token_count, int):
            token_count = self.tokenizer.count(text)
        if self.tokenizer.count(text) > cfg.max_tokens:
            text = self.tokenizer.truncate(text, cfg.max_tokens)
            token_count = self.tokenizer.count(text)
            finish, stop_hit = Finish.LENGTH, None
        return Completion(
            text=text, stop_hit=stop_hit, token_count=token_count, finish=finish
        )


@dataclass(frozen=True)
class ScriptEntry:
    response: str
    expect: Optional[str] = None


class ScriptedClient:
    """Plays back a fixed script of completions, one entry per call.

    Stop sequences and `max_tokens` are emulated with the configured
    tokenizer, so scripted runs exercise the exact segmentation logic used
    against live endpoints. If an entry carries an expected substring that
    the rendered prompt lacks, the call fails deterministically.
    """

    def __init__(
        self,
        script: Sequence[ScriptEntry | tuple | str],
        tokenizer: Tokenizer = DEFAULT_TOKENIZER,
    ):
        if not script:
            raise ValueError("script must be non-empty")
        self.entries = [self._coerce(e) for e in script]
        self.tokenizer = tokenizer
        self.calls: list[tuple[tuple[ChatMessage, ...], SamplingConfig, Role]] = []
        self._index = 0
        self._lock = threading.Lock()

    @staticmethod
    def _coerce(entry) -> ScriptEntry:
        if isinstance(entry, ScriptEntry):
            return entry
        if isinstance(entry, str):
            return ScriptEntry(response=entry)
        expect, response = entry
        return ScriptEntry(response=response, expect=expect)

    def complete(
        self,
        messages: Sequence[ChatMessage],
        cfg: SamplingConfig,
        role_tag: Role = Role.REASONER,
    ) -> Completion:
        if not messages:
            raise ValueError("messages must be non-empty")
        with self._lock:
            if self._index >= len(self.entries):
                raise ScriptExhausted(
                    f"call #{self._index + 1} exceeds the {len(self.entries)}-entry script"
                )
            entry = self.entries[self._index]
            index = self._index
            self._index += 1
            self.calls.append((tuple(messages), cfg, role_tag))

        prompt = "\n".join(m.content for m in messages)
        if entry.expect is not None and entry.expect not in prompt:
            raise ScriptMismatch(
                f"script entry {index} expected substring {entry.expect!r} "
                "not present in the prompt"
            )

        text = entry.response
        stop_hit = None
        finish = Finish.END_OF_TURN
        if cfg.stop_sequences:
            best = None
            for ss in cfg.stop_sequences:
                pos = text.find(ss)
                if pos != -1 and (best is None or pos < best[0]):
                    best = (pos, ss)
            if best is not None:
                text = text[: best[0]]
                stop_hit = best[1]
                finish = Finish.STOP
        if self.tokenizer.count(text) > cfg.max_tokens:
            text = self.tokenizer.truncate(text, cfg.max_tokens)
            finish, stop_hit = Finish.LENGTH, None
        return Completion(
            text=text,
            stop_hit=stop_hit,
            token_count=self.tokenizer.count(text),
            finish=finish,
        )


def load_script(path: str | Path) -> list[ScriptEntry]:
    """Read a mock script file: a JSON array (or JSONL) of entry objects.

    Each entry is {"response": str, "expect": str|null}.
    """
    raw = Path(path).read_text(encoding="utf-8")
    stripped = raw.lstrip()
    if stripped.startswith("["):
        items = json.loads(raw)
    else:
        items = [json.loads(line) for line in raw.splitlines() if line.strip()]
    entries = []
    for i, item in enumerate(items):
        if not isinstance(item, dict) or "response" not in item:
            raise ValueError(f"script entry {i} must be an object with a 'response'")
        entries.append(
            ScriptEntry(response=item["response"], expect=item.get("expect"))
        )
    return entries
