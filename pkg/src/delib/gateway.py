"""Chat-completion access: HTTP backends, retries, caching, scripted mocks.

Both remote and local backends speak the OpenAI-compatible chat-completions
shape, so swapping them is pure configuration. Responses are cached on disk
(or in memory) keyed by a digest of (backend, model, decoding, messages);
the first observed response is frozen, making reruns reproducible.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Sequence

from .errors import ConfigError, SchemaError, TransportError
from .parsing import ParsedPrediction, parse_prediction
from .prompting import PromptBundle

Message = dict  # {"role": "system"|"user"|"assistant", "content": str}


@dataclass(frozen=True)
class DecodingParams:
    temperature: float = 0.0
    max_output_tokens: int = 1024
    response_format_hint: str | None = None


@dataclass(frozen=True)
class Limits:
    max_in_flight: int = 4
    retry_budget: int = 3
    requests_per_minute: int | None = None

    def __post_init__(self):
        if self.max_in_flight < 1:
            raise ConfigError("max_in_flight must be >= 1")
        if self.retry_budget < 0:
            raise ConfigError("retry_budget must be >= 0")


@dataclass(frozen=True)
class BackendConfig:
    name: str
    endpoint: str = ""
    model: str = ""
    auth_env: str | None = None
    decoding: DecodingParams = field(default_factory=DecodingParams)
    limits: Limits = field(default_factory=Limits)

    def digest(self) -> str:
        payload = json.dumps(
            {"name": self.name, "endpoint": self.endpoint, "model": self.model,
             "temperature": self.decoding.temperature,
             "max_output_tokens": self.decoding.max_output_tokens},
            sort_keys=True).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


@dataclass
class CompletionResult:
    text: str
    usage: dict | None = None
    latency_ms: int = 0
    cached: bool = False
    attempt: int = 0


def cache_key(config: BackendConfig, messages: Sequence[Message]) -> str:
    payload = json.dumps(
        {"backend": config.name, "model": config.model,
         "decoding": {"temperature": config.decoding.temperature,
                      "max_output_tokens": config.decoding.max_output_tokens,
                      "response_format_hint": config.decoding.response_format_hint},
         "messages": list(messages)},
        sort_keys=True, ensure_ascii=False).encode()
    return hashlib.sha256(payload).hexdigest()


class ResponseCache:
    """Cache layout: <root>/<backend>/<first 2 hex of key>/<key>.json.

    root=None keeps entries in memory only (useful for throwaway runs).
    Writes are atomic (temp file + rename) and serialized by a lock;
    reads are lock-free.
    """

    def __init__(self, root: str | Path | None):
        self.root = Path(root) if root is not None else None
        self._memory: dict[str, dict] = {}
        self._write_lock = threading.Lock()

    def _path(self, backend: str, key: str) -> Path:
        assert self.root is not None
        return self.root / backend / key[:2] / f"{key}.json"

    def get(self, backend: str, key: str) -> dict | None:
        hit = self._memory.get(key)
        if hit is not None:
            return hit
        if self.root is None:
            return None
        path = self._path(backend, key)
        if not path.is_file():
            return None
        entry = json.loads(path.read_text(encoding="utf-8"))
        self._memory[key] = entry
        return entry

    def put(self, backend: str, key: str, entry: dict) -> None:
        with self._write_lock:
            self._memory[key] = entry
            if self.root is None:
                return
            path = self._path(backend, key)
            path.parent.mkdir(parents=True, exist_ok=True)
            tmp = path.with_suffix(".tmp")
            tmp.write_text(json.dumps(entry, ensure_ascii=False, sort_keys=True),
                           encoding="utf-8")
            tmp.replace(path)


class _RateLimiter:
    def __init__(self, per_minute: int | None, sleep: Callable[[float], None]):
        self.per_minute = per_minute
        self.sleep = sleep
        self._stamps: list[float] = []
        self._lock = threading.Lock()

    def admit(self) -> None:
        if self.per_minute is None:
            return
        while True:
            with self._lock:
                now = time.monotonic()
                self._stamps = [t for t in self._stamps if now - t < 60.0]
                if len(self._stamps) < self.per_minute:
                    self._stamps.append(now)
                    return
                wait = 60.0 - (now - self._stamps[0])
            self.sleep(max(wait, 0.01))


class HttpTransport:
    """POSTs OpenAI-compatible chat-completions requests."""

    def __init__(self, config: BackendConfig, timeout: float = 120.0):
        self.config = config
        self.timeout = timeout
        self.calls = 0

    def _auth_header(self) -> dict:
        if not self.config.auth_env:
            return {}
        token = os.environ.get(self.config.auth_env)
        if not token:
            raise ConfigError(
                f"backend {self.config.name!r}: credential environment "
                f"variable {self.config.auth_env} is not set")
        return {"Authorization": f"Bearer {token}"}

    def __call__(self, messages: Sequence[Message]) -> tuple[int, dict]:
        import requests

        headers = {"Content-Type": "application/json", **self._auth_header()}
        body = {
            "model": self.config.model,
            "messages": list(messages),
            "temperature": self.config.decoding.temperature,
            "max_tokens": self.config.decoding.max_output_tokens,
        }
        if self.config.decoding.response_format_hint:
            body["response_format"] = {"type": self.config.decoding.response_format_hint}
        self.calls += 1
        url = self.config.endpoint.rstrip("/") + "/chat/completions"
        try:
            resp = requests.post(url, json=body, headers=headers, timeout=self.timeout)
        except requests.RequestException as exc:
            raise _Transient(f"request failed: {exc}") from exc
        if resp.status_code == 200:
            try:
                return 200, resp.json()
            except ValueError as exc:
                raise TransportError(f"malformed response body: {exc}") from exc
        if resp.status_code == 429 or resp.status_code >= 500:
            raise _Transient(f"HTTP {resp.status_code}")
        if resp.status_code in (401, 403):
            raise ConfigError(f"authentication failed (HTTP {resp.status_code})")
        raise TransportError(f"HTTP {resp.status_code}: {resp.text[:500]}")


class _Transient(Exception):
    """Retryable transport failure (timeout, 429, 5xx)."""


@dataclass
class MockRule:
    """Scripted response matched by regex over the joined prompt text.

    response may be a string or a callable over the message list. faults is
    a queue of transient failures injected before the response is served.
    """
    pattern: str
    response: str | Callable[[Sequence[Message]], str]
    faults: list[str] = field(default_factory=list)

    def matches(self, prompt_text: str) -> bool:
        return re.search(self.pattern, prompt_text) is not None


class ScriptedTransport:
    """Deterministic transport for tests and offline pipeline runs."""

    def __init__(self, rules: Sequence[MockRule] = (), default: str | None = None):
        self.rules = list(rules)
        self.default = default
        self.calls = 0

    def __call__(self, messages: Sequence[Message]) -> tuple[int, dict]:
        self.calls += 1
        prompt_text = "\n".join(m["content"] for m in messages)
        for rule in self.rules:
            if rule.matches(prompt_text):
                if rule.faults:
                    raise _Transient(rule.faults.pop(0))
                text = rule.response(messages) if callable(rule.response) else rule.response
                return 200, _completion_body(text)
        if self.default is not None:
            return 200, _completion_body(self.default)
        raise TransportError("mock backend: no rule matches the prompt")


def _completion_body(text: str) -> dict:
    return {"choices": [{"message": {"role": "assistant", "content": text}}],
            "usage": {"prompt_tokens": 0, "completion_tokens": 0}}


class ChatBackend:
    """One configured backend with cache, retry, and admission control."""

    def __init__(self, config: BackendConfig, cache: ResponseCache | None = None,
                 transport: Callable[[Sequence[Message]], tuple[int, dict]] | None = None,
                 sleep: Callable[[float], None] = time.sleep,
                 backoff_base: float = 0.5,
                 clock: Callable[[], float] = time.perf_counter):
        self.config = config
        self.cache = cache if cache is not None else ResponseCache(None)
        self.transport = transport if transport is not None else HttpTransport(config)
        self.sleep = sleep
        self.backoff_base = backoff_base
        self.clock = clock
        self._admission = threading.Semaphore(config.limits.max_in_flight)
        self._rate = _RateLimiter(config.limits.requests_per_minute, sleep)

    def complete(self, messages: Sequence[Message]) -> CompletionResult:
        key = cache_key(self.config, messages)
        start = self.clock()
        entry = self.cache.get(self.config.name, key)
        if entry is not None:
            return CompletionResult(
                text=entry["text"], usage=entry.get("usage"),
                latency_ms=int((self.clock() - start) * 1000),
                cached=True, attempt=0)

        if isinstance(self.transport, HttpTransport):
            self.transport._auth_header()  # fail on missing credentials before dispatch

        last_error: Exception | None = None
        for attempt in range(self.config.limits.retry_budget + 1):
            self._rate.admit()
            with self._admission:
                try:
                    status, body = self.transport(messages)
                except _Transient as exc:
                    last_error = exc
                    if attempt < self.config.limits.retry_budget:
                        self.sleep(self.backoff_base * (2 ** attempt))
                    continue
            try:
                text = body["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError) as exc:
                raise TransportError(f"malformed completion body: {body!r:.300}") from exc
            entry = {"key": key, "text": text, "usage": body.get("usage")}
            self.cache.put(self.config.name, key, entry)
            return CompletionResult(
                text=text, usage=body.get("usage"),
                latency_ms=int((self.clock() - start) * 1000),
                cached=False, attempt=attempt)
        raise TransportError(
            f"backend {self.config.name!r}: retries exhausted "
            f"({self.config.limits.retry_budget + 1} attempts): {last_error}")


@dataclass
class ClassifyOutcome:
    prediction: ParsedPrediction | None
    completion: CompletionResult
    failure: str | None = None  # SCHEMA_FAILURE reason when prediction is None


def classify(backend: ChatBackend, bundle: PromptBundle,
             repair_policy: str = "LENIENT") -> ClassifyOutcome:
    """Complete the bundle's messages and parse against its schema.

    Parse failures after a successful completion become structured
    SCHEMA_FAILURE outcomes; transport errors propagate.
    """
    messages = [{"role": "system", "content": bundle.system},
                {"role": "user", "content": bundle.user}]
    completion = backend.complete(messages)
    try:
        prediction = parse_prediction(completion.text, bundle.expected_schema, repair_policy)
    except SchemaError as exc:
        return ClassifyOutcome(prediction=None, completion=completion,
                               failure=exc.reason)
    return ClassifyOutcome(prediction=prediction, completion=completion)


def mock_backend(rules: Sequence[MockRule] = (), default: str | None = None,
                 name: str = "mock", cache: ResponseCache | None = None,
                 model: str = "mock-model") -> ChatBackend:
    """Deterministic scripted backend that can drive the whole pipeline."""
    config = BackendConfig(name=name, model=model)
    # fixed clock: scripted runs report latency 0, keeping records reproducible
    return ChatBackend(config, cache=cache, transport=ScriptedTransport(rules, default),
                       sleep=lambda _t: None, clock=lambda: 0.0)
