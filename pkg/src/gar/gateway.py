"""Chat-completion HTTP client with retries and bounded batch concurrency."""

from __future__ import annotations

import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import httpx

from gar.errors import (
    ConfigurationError,
    GatewayError,
    ProtocolError,
    RateLimited,
    RequestRejected,
    Unavailable,
)

log = logging.getLogger(__name__)

Role = Literal["system", "user", "assistant"]
ROLES = ("system", "user", "assistant")
TOP_LOGPROBS = 5


@dataclass(frozen=True)
class GenerationRequest:
    messages: tuple[dict, ...]
    temperature: float = 0.6
    top_p: float = 0.95
    max_tokens: int = 32768
    want_logprobs: bool = False
    model_name: str = ""

    def __post_init__(self):
        msgs = tuple({"role": m["role"], "content": m["content"]} for m in self.messages)
        for m in msgs:
            if m["role"] not in ROLES:
                raise ConfigurationError(f"unknown message role {m['role']!r}")
            if not isinstance(m["content"], str):
                raise ConfigurationError("message content must be a string")
        object.__setattr__(self, "messages", msgs)
        if self.temperature < 0:
            raise ConfigurationError("temperature must be >= 0")
        if not 0 < self.top_p <= 1:
            raise ConfigurationError("top_p must lie in (0, 1]")
        if self.max_tokens < 1:
            raise ConfigurationError("max_tokens must be >= 1")

    def payload(self, default_model: str = "") -> dict:
        body = {
            "model": self.model_name or default_model,
            "messages": [dict(m) for m in self.messages],
            "temperature": self.temperature,
            "top_p": self.top_p,
            "max_tokens": self.max_tokens,
        }
        if self.want_logprobs:
            body["logprobs"] = True
            body["top_logprobs"] = TOP_LOGPROBS
        return body

    def serialize(self, default_model: str = "") -> bytes:
        """Canonical request body: identical requests give identical bytes."""
        return json.dumps(
            self.payload(default_model), sort_keys=True, separators=(",", ":"), ensure_ascii=False
        ).encode("utf-8")


@dataclass(frozen=True)
class Generation:
    text: str
    token_count: int
    finish_reason: Literal["stop", "length"]
    per_token_logprobs: list[float] | None = None
    # top-k alternatives per position, when the server returns them
    top_logprobs: list[list[float]] | None = None

    def to_dict(self) -> dict:
        return {
            "text": self.text,
            "token_count": self.token_count,
            "finish_reason": self.finish_reason,
            "per_token_logprobs": self.per_token_logprobs,
            "top_logprobs": self.top_logprobs,
        }


@dataclass(frozen=True)
class GatewayConfig:
    endpoint: str
    model: str = ""
    api_key: str | None = field(default=None, repr=False)
    timeout: float = 120.0
    max_attempts: int = 5
    backoff_base: float = 1.0
    backoff_factor: float = 2.0

    def __post_init__(self):
        if not self.endpoint:
            raise ConfigurationError("gateway endpoint is not set")
        if self.max_attempts < 1:
            raise ConfigurationError("max_attempts must be >= 1")

    @classmethod
    def from_env(cls, env=None, **overrides) -> "GatewayConfig":
        """Read GAR_ENDPOINT, GAR_MODEL and GAR_API_KEY; explicit overrides win."""
        env = os.environ if env is None else env
        values = {
            "endpoint": env.get("GAR_ENDPOINT", ""),
            "model": env.get("GAR_MODEL", ""),
            "api_key": env.get("GAR_API_KEY") or None,
        }
        values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def backoff_delays(self) -> list[float]:
        """Sleeps between attempts: base, base*factor, ... (max_attempts - 1 of them)."""
        return [self.backoff_base * self.backoff_factor**i for i in range(self.max_attempts - 1)]


def _completions_url(endpoint: str) -> str:
    endpoint = endpoint.rstrip("/")
    return endpoint if endpoint.endswith("/chat/completions") else endpoint + "/chat/completions"


def parse_response(body: object, req: GenerationRequest) -> Generation:
    """Decode one chat-completion response body, enforcing the token contract."""
    try:
        choice = body["choices"][0]
        text = choice["message"]["content"] or ""
        reason = choice.get("finish_reason") or "stop"
    except (KeyError, IndexError, TypeError) as exc:
        raise ProtocolError(f"malformed completion body: {exc!r}") from exc
    if not isinstance(text, str):
        raise ProtocolError("completion content is not a string")
    if reason not in ("stop", "length"):
        raise ProtocolError(f"unsupported finish_reason {reason!r}")

    logprobs = top = None
    if req.want_logprobs:
        try:
            content = (choice.get("logprobs") or {}).get("content") or []
            logprobs = [float(t["logprob"]) for t in content]
            top = [[float(a["logprob"]) for a in t.get("top_logprobs") or []] for t in content]
        except (KeyError, TypeError, ValueError, AttributeError) as exc:
            raise ProtocolError(f"malformed logprobs: {exc!r}") from exc

    usage = body.get("usage") if isinstance(body, dict) else None
    if isinstance(usage, dict) and isinstance(usage.get("completion_tokens"), int):
        count = usage["completion_tokens"]
    elif logprobs is not None:
        count = len(logprobs)
    else:
        count = len(text.split())
    if count > req.max_tokens:
        raise ProtocolError(f"server returned {count} tokens for max_tokens={req.max_tokens}")
    if reason == "length" and count != req.max_tokens:
        raise ProtocolError(f"finish_reason=length with {count} of {req.max_tokens} tokens")
    return Generation(text, count, reason, logprobs, top)


class GatewayClient:
    """Thread-safe client; one shared connection pool, no per-call mutable state."""

    def __init__(
        self,
        config: GatewayConfig,
        *,
        transport: httpx.BaseTransport | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.config = config
        self._sleep = sleep
        headers = {"Content-Type": "application/json"}
        if config.api_key:
            headers["Authorization"] = f"Bearer {config.api_key}"
        self._http = httpx.Client(timeout=config.timeout, headers=headers, transport=transport)
        self._url = _completions_url(config.endpoint)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> "GatewayClient":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    def _attempt(self, body: bytes, req: GenerationRequest) -> Generation:
        try:
            resp = self._http.post(self._url, content=body)
        except httpx.TransportError as exc:
            raise Unavailable(f"transport failure: {exc}") from exc
        if resp.status_code == 429:
            raise RateLimited("rate limited (429)")
        if resp.status_code >= 500:
            raise Unavailable(f"server error {resp.status_code}")
        if resp.status_code >= 400:
            raise RequestRejected(f"status {resp.status_code}: {resp.text[:200]}")
        try:
            data = resp.json()
        except ValueError as exc:
            raise ProtocolError("response body is not JSON") from exc
        return parse_response(data, req)

    def generate(self, req: GenerationRequest) -> Generation:
        """One logical call: retries rate limits, 5xx and transport errors with
        exponential backoff; raises Unavailable once attempts run out."""
        body = req.serialize(self.config.model)
        delays = self.config.backoff_delays()
        last: GatewayError | None = None
        for attempt in range(self.config.max_attempts):
            try:
                return self._attempt(body, req)
            except (RateLimited, Unavailable) as exc:
                last = exc
                if attempt < len(delays):
                    log.warning("attempt %d failed (%s); retrying in %.1fs", attempt + 1, exc, delays[attempt])
                    self._sleep(delays[attempt])
        raise Unavailable(f"gave up after {self.config.max_attempts} attempts: {last}") from last

    def generate_batch(
        self, reqs: Sequence[GenerationRequest], max_in_flight: int = 8
    ) -> list[Generation | GatewayError]:
        """Results in request order; a failed item is returned as its exception."""
        if max_in_flight < 1:
            raise ConfigurationError("max_in_flight must be >= 1")
        if not reqs:
            return []

        def one(req: GenerationRequest) -> Generation | GatewayError:
            try:
                return self.generate(req)
            except GatewayError as exc:
                return exc

        with ThreadPoolExecutor(max_workers=max_in_flight) as pool:
            return list(pool.map(one, reqs))


def generate(req: GenerationRequest, endpoint: str, auth: str | None = None, **client_kw) -> Generation:
    with GatewayClient(GatewayConfig(endpoint=endpoint, api_key=auth), **client_kw) as client:
        return client.generate(req)


def generate_batch(
    reqs: Sequence[GenerationRequest],
    endpoint: str,
    max_in_flight: int = 8,
    auth: str | None = None,
    **client_kw,
) -> list[Generation | GatewayError]:
    with GatewayClient(GatewayConfig(endpoint=endpoint, api_key=auth), **client_kw) as client:
        return client.generate_batch(reqs, max_in_flight)
