"""Chat-completion gateway: OpenAI-compatible wire transport with retries,
lenient label parsing, and deterministic mock gateways for offline runs.
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import random
import re
import threading
import time
from dataclasses import dataclass, field

from .prompts import AssembledPrompt, TaskSpec

log = logging.getLogger(__name__)

__all__ = [
    "GatewayConfig",
    "QueryContext",
    "Verdict",
    "AuthError",
    "TransportError",
    "build_request_body",
    "OpenAIGateway",
    "OracleGateway",
    "UniformGateway",
    "ScriptedGateway",
    "make_mock_gateway",
    "parse_label",
]

MAX_IMAGE_B64_BYTES = 20 * 1024 * 1024


class AuthError(RuntimeError):
    """Fatal configuration problem (bad or missing credentials)."""


class TransportError(RuntimeError):
    """Request failed after all retries; recorded as an Invalid verdict."""


@dataclass(frozen=True)
class GatewayConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4o-2024-05-13"
    api_key_env: str = "OPENAI_API_KEY"
    temperature: float = 0.0
    max_tokens: int = 512
    timeout_s: float = 60.0
    max_in_flight: int = 4
    attempts: int = 3
    backoff_base_s: float = 2.0

    def __post_init__(self):
        if self.temperature < 0:
            raise ValueError("temperature must be >= 0")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")


@dataclass(frozen=True)
class QueryContext:
    """Out-of-band sample information supplied by the harness.

    Mock gateways use it (the oracle answers ``true_label``); the real
    gateway ignores everything but logging fields.
    """

    sample_id: str
    true_label: int
    task: TaskSpec
    trial_seed: int = 0


@dataclass(frozen=True)
class Verdict:
    """Parsed model answer; ``label`` is None when no class was recognized."""

    label: int | None
    raw_text: str
    explanation: str
    latency_ms: float | None = None
    prompt_tokens: int | None = None
    completion_tokens: int | None = None
    error: str | None = None

    @property
    def is_invalid(self) -> bool:
        return self.label is None


def _parts_checksum(prompt: AssembledPrompt) -> str:
    h = hashlib.sha256()
    for part in prompt.parts:
        if part.kind == "text":
            h.update(b"T")
            h.update(part.text.encode("utf-8"))
        else:
            h.update(b"I")
            h.update(part.image)
    return h.hexdigest()


def build_request_body(prompt: AssembledPrompt, config: GatewayConfig) -> dict:
    """Single user message with ordered text / image_url content parts."""
    content = []
    for part in prompt.parts:
        if part.kind == "text":
            content.append({"type": "text", "text": part.text})
        else:
            b64 = base64.b64encode(part.image).decode("ascii")
            if len(b64) > MAX_IMAGE_B64_BYTES:
                raise ValueError(
                    f"image attachment is {len(b64)} bytes after base64 encoding "
                    f"(limit {MAX_IMAGE_B64_BYTES})"
                )
            content.append(
                {"type": "image_url", "image_url": {"url": f"data:image/png;base64,{b64}"}}
            )
    return {
        "model": config.model,
        "messages": [{"role": "user", "content": content}],
        "temperature": config.temperature,
        "max_tokens": config.max_tokens,
    }


def _requests_transport(url: str, headers: dict, body: dict, timeout: float):
    import requests

    resp = requests.post(url, headers=headers, json=body, timeout=timeout)
    try:
        payload = resp.json()
    except ValueError:
        payload = {}
    return resp.status_code, payload


class OpenAIGateway:
    """Real chat-completion gateway.

    ``transport(url, headers, body, timeout) -> (status, json)`` is
    injectable for testing; retries 429 and 5xx with exponential backoff
    and jitter; an internal semaphore caps in-flight requests.
    """

    def __init__(self, config: GatewayConfig, transport=None, sleep=time.sleep,
                 rng: random.Random | None = None, request_log=None):
        self.config = config
        self._transport = transport or _requests_transport
        self._sleep = sleep
        self._rng = rng or random.Random()
        self._limiter = threading.Semaphore(config.max_in_flight)
        self._request_log = request_log  # callable(dict) for JSON-lines audit

    def _api_key(self) -> str:
        key = os.environ.get(self.config.api_key_env, "")
        if not key:
            raise AuthError(
                f"API key environment variable {self.config.api_key_env!r} is not set"
            )
        return key

    def send(self, prompt: AssembledPrompt) -> str:
        body = build_request_body(prompt, self.config)
        headers = {
            "Authorization": f"Bearer {self._api_key()}",
            "Content-Type": "application/json",
        }
        log.debug("prompt checksum %s", _parts_checksum(prompt))
        last = "no attempt made"
        for attempt in range(self.config.attempts):
            if attempt:
                delay = self.config.backoff_base_s * 2 ** (attempt - 1)
                self._sleep(delay + self._rng.uniform(0, delay / 2))
            try:
                with self._limiter:
                    status, payload = self._transport(
                        self.config.endpoint, headers, body, self.config.timeout_s
                    )
            except AuthError:
                raise
            except Exception as exc:  # timeouts, connection errors
                last = f"transport failure: {exc}"
                log.warning("attempt %d failed: %s", attempt + 1, last)
                continue
            if self._request_log is not None:
                self._request_log({"request": body, "status": status, "response": payload})
            if status in (401, 403):
                raise AuthError(f"authentication failed (HTTP {status})")
            if status == 429 or status >= 500:
                last = f"HTTP {status}"
                log.warning("attempt %d got %s, backing off", attempt + 1, last)
                continue
            if status != 200:
                raise TransportError(f"HTTP {status}: {json.dumps(payload)[:200]}")
            try:
                return payload["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError):
                raise TransportError(f"malformed response: {json.dumps(payload)[:200]}")
        raise TransportError(f"exhausted {self.config.attempts} attempts ({last})")

    def respond(self, prompt: AssembledPrompt, context: QueryContext) -> str:
        return self.send(prompt)


@dataclass
class OracleGateway:
    """Answers the queried sample's true label; for protocol verification."""

    calls: int = 0

    def respond(self, prompt: AssembledPrompt, context: QueryContext) -> str:
        self.calls += 1
        return str(context.true_label)


@dataclass
class UniformGateway:
    """Seeded uniform label draws, keyed by (seed, trial seed, sample id).

    Keying by content rather than call order makes results identical no
    matter how samples are scheduled across workers.
    """

    seed: int
    calls: int = 0

    def respond(self, prompt: AssembledPrompt, context: QueryContext) -> str:
        self.calls += 1
        key = f"{self.seed}|{context.trial_seed}|{context.sample_id}".encode()
        digest = hashlib.sha256(key).digest()
        return str(int.from_bytes(digest[:8], "big") % context.task.n_classes)


class ScriptedGateway:
    """Replays a fixed list of raw responses in call order."""

    def __init__(self, replies):
        replies = list(replies)
        if not replies:
            raise ValueError("scripted gateway needs a non-empty reply list")
        self._replies = replies
        self._lock = threading.Lock()
        self.calls = 0

    def respond(self, prompt: AssembledPrompt, context: QueryContext) -> str:
        with self._lock:
            if self.calls >= len(self._replies):
                raise RuntimeError("scripted gateway: reply list exhausted")
            reply = self._replies[self.calls]
            self.calls += 1
            return reply


def make_mock_gateway(kind: str, seed: int = 0, replies=None):
    if kind == "oracle":
        return OracleGateway()
    if kind == "uniform":
        return UniformGateway(seed=seed)
    if kind == "scripted":
        return ScriptedGateway(replies or [])
    raise ValueError(f"unknown mock gateway kind {kind!r}")


_INT_TOKEN = re.compile(r"(?<![\w.+-])[+-]?\d+(?!\w)(?!\.\d)")


def parse_label(raw: str, task: TaskSpec) -> Verdict:
    """Lenient parsing ladder for class labels.

    1. the whole trimmed text is an in-range integer;
    2. the first standalone in-range integer token;
    3. a case-insensitive whole-word match of exactly one class name;
    4. otherwise Invalid. The explanation is the text minus the match.
    """
    stripped = raw.strip()
    if re.fullmatch(r"[+-]?\d+", stripped):
        value = int(stripped)
        if 0 <= value < task.n_classes:
            return Verdict(label=value, raw_text=raw, explanation="")
    for match in _INT_TOKEN.finditer(raw):
        value = int(match.group())
        if 0 <= value < task.n_classes:
            explanation = (raw[: match.start()] + raw[match.end():]).strip()
            return Verdict(label=value, raw_text=raw, explanation=explanation)
    hits = []
    for cls in task.classes:
        match = re.search(rf"\b{re.escape(cls.name)}\b", raw, flags=re.IGNORECASE)
        if match:
            hits.append((cls.index, match))
    if len(hits) == 1:
        index, match = hits[0]
        explanation = (raw[: match.start()] + raw[match.end():]).strip()
        return Verdict(label=index, raw_text=raw, explanation=explanation)
    return Verdict(label=None, raw_text=raw, explanation=raw)
