"""Provider-agnostic model client with budgeting and record/replay.

Three interchangeable transports share one request shape:

* ``LiveProvider`` POSTs a chat-completions style JSON body to a
  configured endpoint, retrying transient failures with exponential
  backoff.
* ``RecordProvider`` wraps another transport and writes each exchange to
  ``fixtures/{hash}.json``.
* ``ReplayProvider`` answers purely from those fixtures — zero network
  I/O, byte-deterministic.

``complete`` is the single entry point: it reserves budget before
dispatch, refunds on failure, commits actual usage on success, and
validates that structured responses parse.
"""

from __future__ import annotations

import hashlib
import json
import threading
import time
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Protocol

import yaml

from vts.config import BudgetConfig, ProviderConfig
from vts.errors import (
    BudgetExceeded,
    ConfigError,
    MalformedResponse,
    MissingFixture,
    ProviderError,
)

_TOKENS_PER_IMAGE = 1024
_CHARS_PER_TOKEN = 3


class ResponseFormat(str, Enum):
    YAML = "yaml"
    JSON = "json"
    TEXT = "text"


@dataclass(frozen=True)
class ModelRequest:
    model: str
    system_prompt: str
    user_prompt: str
    images: tuple[bytes, ...] = ()
    response_format: ResponseFormat = ResponseFormat.TEXT
    max_output_tokens: int = 4096

    def __post_init__(self) -> None:
        if not self.model:
            raise ValueError("model must be non-empty")
        if self.max_output_tokens <= 0:
            raise ValueError("max_output_tokens must be positive")


@dataclass(frozen=True)
class ModelResponse:
    text: str
    input_tokens: int
    output_tokens: int
    latency_ms: int = 0

    def __post_init__(self) -> None:
        if self.input_tokens < 0 or self.output_tokens < 0:
            raise ValueError("token counts must be >= 0")

    @property
    def total_tokens(self) -> int:
        return self.input_tokens + self.output_tokens


def canonical_request_hash(request: ModelRequest) -> str:
    """Stable SHA-256 fingerprint of a request, image blobs hashed individually."""
    parts = [
        request.model,
        request.system_prompt,
        request.user_prompt,
        request.response_format.value,
        str(request.max_output_tokens),
    ]
    parts.extend(hashlib.sha256(blob).hexdigest() for blob in request.images)
    digest = hashlib.sha256()
    for index, part in enumerate(parts):
        if index:
            digest.update(b"\x00")
        digest.update(part.encode("utf-8"))
    return digest.hexdigest()


@dataclass(frozen=True)
class Reservation:
    tokens: int


class Budget:
    """Request/token quota with atomic check-and-reserve accounting.

    ``reserve`` fails closed before any dispatch; ``refund`` releases a
    reservation whose call failed; ``commit`` converts one into consumed
    usage. Consumed counters are monotonic and never exceed the maxima.
    """

    def __init__(self, max_requests: int, max_total_tokens: int) -> None:
        if max_requests <= 0 or max_total_tokens <= 0:
            raise ValueError("budget maxima must be positive")
        self.max_requests = max_requests
        self.max_total_tokens = max_total_tokens
        self._lock = threading.Lock()
        self._consumed_requests = 0
        self._consumed_tokens = 0
        self._reserved_requests = 0
        self._reserved_tokens = 0

    @property
    def consumed_requests(self) -> int:
        with self._lock:
            return self._consumed_requests

    @property
    def consumed_tokens(self) -> int:
        with self._lock:
            return self._consumed_tokens

    def reserve(self, estimated_tokens: int) -> Reservation:
        estimated_tokens = max(0, estimated_tokens)
        with self._lock:
            if self._consumed_requests + self._reserved_requests + 1 > self.max_requests:
                raise BudgetExceeded(
                    f"request budget exhausted ({self.max_requests} max)"
                )
            if (
                self._consumed_tokens + self._reserved_tokens + estimated_tokens
                > self.max_total_tokens
            ):
                raise BudgetExceeded(
                    f"token budget exhausted ({self.max_total_tokens} max)"
                )
            self._reserved_requests += 1
            self._reserved_tokens += estimated_tokens
            return Reservation(tokens=estimated_tokens)

    def refund(self, reservation: Reservation) -> None:
        with self._lock:
            self._reserved_requests -= 1
            self._reserved_tokens -= reservation.tokens

    def commit(self, reservation: Reservation, actual_tokens: int) -> None:
        with self._lock:
            self._reserved_requests -= 1
            self._reserved_tokens -= reservation.tokens
            self._consumed_requests += 1
            self._consumed_tokens = min(
                self.max_total_tokens, self._consumed_tokens + max(0, actual_tokens)
            )


def estimate_tokens(request: ModelRequest) -> int:
    prompt_chars = len(request.system_prompt) + len(request.user_prompt)
    return (
        prompt_chars // _CHARS_PER_TOKEN
        + len(request.images) * _TOKENS_PER_IMAGE
        + request.max_output_tokens
    )


class Provider(Protocol):
    def send(self, request: ModelRequest) -> ModelResponse: ...


def _fixture_path(fixtures_dir: Path, request: ModelRequest) -> Path:
    return fixtures_dir / f"{canonical_request_hash(request)}.json"


def request_summary(request: ModelRequest) -> dict[str, object]:
    return {
        "model": request.model,
        "system_prompt_head": request.system_prompt[:160],
        "user_prompt_head": request.user_prompt[:160],
        "images": len(request.images),
        "response_format": request.response_format.value,
        "max_output_tokens": request.max_output_tokens,
    }


class ReplayProvider:
    """Answers from recorded fixtures only; never opens a socket."""

    def __init__(self, fixtures_dir: str | Path) -> None:
        self.fixtures_dir = Path(fixtures_dir)

    def send(self, request: ModelRequest) -> ModelResponse:
        path = _fixture_path(self.fixtures_dir, request)
        if not path.is_file():
            raise MissingFixture(path.stem)
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise MissingFixture(f"{path.stem} (unreadable: {exc})")
        return ModelResponse(
            text=str(data.get("text", "")),
            input_tokens=int(data.get("input_tokens", 0)),
            output_tokens=int(data.get("output_tokens", 0)),
            latency_ms=0,
        )


class RecordProvider:
    """Delegates to an inner transport and persists every exchange."""

    def __init__(self, inner: Provider, fixtures_dir: str | Path) -> None:
        self.inner = inner
        self.fixtures_dir = Path(fixtures_dir)

    def send(self, request: ModelRequest) -> ModelResponse:
        response = self.inner.send(request)
        self.fixtures_dir.mkdir(parents=True, exist_ok=True)
        payload = {
            "request_summary": request_summary(request),
            "text": response.text,
            "input_tokens": response.input_tokens,
            "output_tokens": response.output_tokens,
        }
        path = _fixture_path(self.fixtures_dir, request)
        path.write_text(
            json.dumps(payload, indent=2, ensure_ascii=False, sort_keys=True) + "\n",
            encoding="utf-8",
        )
        return response


class LiveProvider:
    """Chat-completions style HTTPS transport with retry/backoff."""

    _RETRIABLE_STATUS = frozenset({408, 409, 425, 429, 500, 502, 503, 504})

    def __init__(
        self,
        endpoint: str,
        api_key: str,
        retries: int = 2,
        backoff_s: float = 0.5,
        timeout_s: float = 120.0,
    ) -> None:
        if not endpoint:
            raise ConfigError("live provider requires an endpoint (VTS_ENDPOINT)")
        self.endpoint = endpoint
        self.api_key = api_key
        self.retries = retries
        self.backoff_s = backoff_s
        self.timeout_s = timeout_s

    def _body(self, request: ModelRequest) -> dict[str, object]:
        import base64

        content: list[dict[str, object]] = [{"type": "text", "text": request.user_prompt}]
        for blob in request.images:
            encoded = base64.b64encode(blob).decode("ascii")
            content.append(
                {
                    "type": "image_url",
                    "image_url": {"url": f"data:image/png;base64,{encoded}"},
                }
            )
        return {
            "model": request.model,
            "temperature": 0,
            "max_tokens": request.max_output_tokens,
            "messages": [
                {"role": "system", "content": request.system_prompt},
                {"role": "user", "content": content},
            ],
        }

    def send(self, request: ModelRequest) -> ModelResponse:
        import requests as _requests

        body = self._body(request)
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last_error: Exception | None = None
        for attempt in range(self.retries + 1):
            if attempt:
                time.sleep(self.backoff_s * 2 ** (attempt - 1))
            started = time.monotonic()
            try:
                http = _requests.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout_s
                )
            except _requests.RequestException as exc:
                last_error = ProviderError(0, f"transport failure: {exc}")
                continue
            if http.status_code in self._RETRIABLE_STATUS:
                last_error = ProviderError(http.status_code, http.text[:500])
                continue
            if http.status_code != 200:
                raise ProviderError(http.status_code, http.text[:500])
            return self._parse(http, started)
        assert last_error is not None
        raise last_error

    def _parse(self, http, started: float) -> ModelResponse:
        latency_ms = int((time.monotonic() - started) * 1000)
        try:
            data = http.json()
            text = data["choices"][0]["message"]["content"]
            usage = data.get("usage", {})
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise MalformedResponse(f"unexpected response shape: {exc}")
        if not isinstance(text, str):
            raise MalformedResponse("response content is not text")
        return ModelResponse(
            text=text,
            input_tokens=int(usage.get("prompt_tokens", 0)),
            output_tokens=int(usage.get("completion_tokens", 0)),
            latency_ms=latency_ms,
        )


def _check_format(request: ModelRequest, text: str) -> None:
    if not text.strip():
        raise MalformedResponse("empty response text")
    if request.response_format is ResponseFormat.JSON:
        try:
            json.loads(text)
        except json.JSONDecodeError as exc:
            raise MalformedResponse(f"response is not valid JSON: {exc}")
    elif request.response_format is ResponseFormat.YAML:
        try:
            parsed = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise MalformedResponse(f"response is not valid YAML: {exc}")
        if not isinstance(parsed, (dict, list)):
            raise MalformedResponse("response YAML is not a mapping or sequence")


def complete(provider: Provider, request: ModelRequest, budget: Budget) -> ModelResponse:
    """Send one request under budget control.

    Reserves headroom before dispatch, refunds it when the call raises,
    and commits actual usage on success — so a budget with no headroom
    rejects without any I/O, and counters stay within their maxima.
    """
    reservation = budget.reserve(estimate_tokens(request))
    try:
        response = provider.send(request)
        _check_format(request, response.text)
    except Exception:
        budget.refund(reservation)
        raise
    budget.commit(reservation, response.total_tokens)
    return response


@dataclass(frozen=True)
class ProviderSession:
    """A transport plus the budget its calls draw from."""

    provider: Provider
    budget: Budget
    model: str = "vts-default"

    def complete(self, request: ModelRequest) -> ModelResponse:
        return complete(self.provider, request, self.budget)


def build_provider(config: ProviderConfig) -> Provider:
    if config.mode == "replay":
        return ReplayProvider(config.fixtures_dir)
    live = LiveProvider(
        endpoint=config.endpoint,
        api_key=config.api_key,
        retries=config.retries,
        backoff_s=config.backoff_s,
    )
    if config.mode == "record":
        return RecordProvider(live, config.fixtures_dir)
    return live


def build_session(provider: ProviderConfig, budget: BudgetConfig) -> ProviderSession:
    return ProviderSession(
        provider=build_provider(provider),
        budget=Budget(budget.max_requests, budget.max_total_tokens),
        model=provider.model or "vts-default",
    )
