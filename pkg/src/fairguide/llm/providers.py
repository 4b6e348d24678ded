"""Chat-completion providers: OpenAI-style HTTP gateway and a scripted mock."""

from __future__ import annotations

import os
import threading
import time
from dataclasses import dataclass, field
from typing import Sequence

import httpx

from ..core import ValidationError

ROLES = ("system", "user", "assistant")

DEFAULT_DETECTION_MODEL = "claude-3-7-sonnet-20250219"
DEFAULT_FUSION_MODEL = "gpt-4o-mini-2024-07-18"

API_KEY_ENV = "FAIRGUIDE_LLM_API_KEY"
BASE_URL_ENV = "FAIRGUIDE_LLM_BASE_URL"
FUSION_API_KEY_ENV = "FAIRGUIDE_LLM_FUSION_API_KEY"
FUSION_BASE_URL_ENV = "FAIRGUIDE_LLM_FUSION_BASE_URL"


class TransportError(RuntimeError):
    """Network or HTTP failure talking to a provider; carries status when known."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self) -> None:
        if self.role not in ROLES:
            raise ValidationError(f"unknown chat role {self.role!r}")
        if not self.content:
            raise ValidationError("empty chat message content")

    def as_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ProviderConfig:
    """Connection settings for one chat-completion gateway.

    api_key_env names the environment variable holding the key; the key
    itself is never stored. Temperature defaults to 0 so detection results
    are stable enough to cache.
    """

    base_url: str = ""
    api_key_env: str = API_KEY_ENV
    model: str = DEFAULT_DETECTION_MODEL
    temperature: float = 0.0
    timeout: float = 60.0
    max_retries: int = 2
    max_in_flight: int = 4

    def __post_init__(self) -> None:
        if self.temperature < 0:
            raise ValidationError("temperature must be >= 0")
        if self.timeout <= 0:
            raise ValidationError("timeout must be > 0")
        if self.max_retries < 0:
            raise ValidationError("max_retries must be >= 0")


def detection_config(**overrides) -> ProviderConfig:
    base = {"base_url": os.environ.get(BASE_URL_ENV, ""), "model": DEFAULT_DETECTION_MODEL}
    base.update(overrides)
    return ProviderConfig(**base)


def fusion_config(**overrides) -> ProviderConfig:
    base = {
        "base_url": os.environ.get(FUSION_BASE_URL_ENV, os.environ.get(BASE_URL_ENV, "")),
        "api_key_env": FUSION_API_KEY_ENV if FUSION_API_KEY_ENV in os.environ else API_KEY_ENV,
        "model": DEFAULT_FUSION_MODEL,
    }
    base.update(overrides)
    return ProviderConfig(**base)


class HttpChatProvider:
    """OpenAI-style chat-completions client over HTTPS.

    POSTs {model, messages, temperature} to <base_url>/chat/completions and
    reads choices[0].message.content. Reentrant; a semaphore bounds in-flight
    requests per provider instance.
    """

    def __init__(self, config: ProviderConfig, client: httpx.Client | None = None):
        if not config.base_url:
            raise ValidationError(
                f"no base URL configured (set {BASE_URL_ENV} or pass base_url)"
            )
        self.config = config
        self._client = client or httpx.Client(timeout=config.timeout)
        self._inflight = threading.Semaphore(config.max_in_flight)

    def complete(self, messages: Sequence[ChatMessage]) -> tuple[str, dict]:
        headers = {}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        payload = {
            "model": self.config.model,
            "messages": [m.as_dict() for m in messages],
            "temperature": self.config.temperature,
        }
        start = time.monotonic()
        with self._inflight:
            try:
                resp = self._client.post(
                    self.config.base_url.rstrip("/") + "/chat/completions",
                    json=payload,
                    headers=headers,
                )
            except httpx.HTTPError as exc:
                raise TransportError(f"chat transport failure: {exc}") from exc
        latency = time.monotonic() - start
        if resp.status_code != 200:
            raise TransportError(
                f"chat request failed with status {resp.status_code}: {resp.text[:200]}",
                status=resp.status_code,
            )
        try:
            content = resp.json()["choices"][0]["message"]["content"]
        except (KeyError, IndexError, ValueError) as exc:
            raise TransportError(f"malformed chat response: {exc}") from exc
        meta = {"model": self.config.model, "latency_s": latency}
        return content, meta


class MockChatProvider:
    """Scripted provider for hermetic tests.

    Replays the script entries in order, repeating the last one once the
    script is exhausted. An entry that is an Exception is raised instead of
    returned. Records every call's message list for assertions.
    """

    def __init__(self, script: Sequence[str | Exception], model: str = "mock-model"):
        if not script:
            raise ValidationError("mock script is empty")
        self.script = list(script)
        self.config = ProviderConfig(base_url="mock://", model=model)
        self.calls: list[list[ChatMessage]] = []

    def complete(self, messages: Sequence[ChatMessage]) -> tuple[str, dict]:
        self.calls.append(list(messages))
        i = min(len(self.calls) - 1, len(self.script) - 1)
        entry = self.script[i]
        if isinstance(entry, Exception):
            raise entry
        return entry, {"model": self.config.model, "latency_s": 0.0}
