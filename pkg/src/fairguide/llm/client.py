"""Detection and fusion operations: request building, response parsing, retries."""

from __future__ import annotations

import json
import re
from dataclasses import dataclass

from ..core import (
    AttributeAssignment,
    AttributeCatalog,
    PromptText,
    ValidationError,
    validate_catalog,
)
from ..resample import fallback_fuse
from .cache import ResponseCache
from .providers import ChatMessage, TransportError
from .templates import DETECTION_TEMPLATE, DETECTION_TEMPLATE_HASH, FUSION_TEMPLATE

# Extra words a fused rewrite may add beyond the original prompt and the
# attribute values before it counts as embellishment and is rejected.
FUSION_WORD_SLACK = 8


class DetectionParseError(ValueError):
    """Raw response could not be turned into a valid catalog."""

    def __init__(self, message: str, raw: str, violations: list[str] | None = None):
        super().__init__(message)
        self.raw = raw
        self.violations = violations or [message]


class DetectionFailedError(RuntimeError):
    """All detection attempts exhausted; carries the last raw response."""

    def __init__(self, message: str, last_raw: str | None):
        super().__init__(message)
        self.last_raw = last_raw


@dataclass(frozen=True)
class DetectionResult:
    catalog: AttributeCatalog
    raw: str
    model: str
    latency_s: float
    from_cache: bool = False


@dataclass(frozen=True)
class FusionResult:
    prompt: PromptText
    source: str  # "llm" | "fallback"


def build_detection_request(y: PromptText) -> list[ChatMessage]:
    """System message is the detection template verbatim; user message is the prompt."""
    return [
        ChatMessage("system", DETECTION_TEMPLATE),
        ChatMessage("user", y.text),
    ]


def _strip_fences(s: str) -> str:
    s = s.strip()
    if s.startswith("```"):
        s = re.sub(r"^```[a-zA-Z0-9_-]*\s*", "", s)
        s = re.sub(r"\s*```$", "", s)
    return s.strip()


def parse_detection(raw: str) -> AttributeCatalog:
    """Extract the outermost JSON object and map it onto a validated catalog.

    Tolerates code fences and trailing commas (the template's own few-shot
    answers carry one before the closing brace).
    """
    text = _strip_fences(raw)
    i, j = text.find("{"), text.rfind("}")
    if i == -1 or j == -1 or j <= i:
        raise DetectionParseError("no JSON object found in response", raw)
    candidate = re.sub(r",\s*([}\]])", r"\1", text[i : j + 1])
    try:
        data = json.loads(candidate)
    except json.JSONDecodeError as exc:
        raise DetectionParseError(f"invalid JSON: {exc}", raw) from exc
    if not isinstance(data, dict):
        raise DetectionParseError("top-level JSON value is not an object", raw)
    for cat, attrs in data.items():
        if not isinstance(attrs, list) or not all(isinstance(a, str) for a in attrs):
            raise DetectionParseError(
                f"value for category {cat!r} is not an array of strings", raw
            )
    catalog = AttributeCatalog.from_dict(data)
    violations = validate_catalog(catalog)
    if violations:
        raise DetectionParseError(
            "catalog validation failed: " + "; ".join(violations), raw, violations
        )
    return catalog


def _corrective(error: DetectionParseError) -> ChatMessage:
    rule = "; ".join(error.violations)
    return ChatMessage(
        "user", f"Your previous answer violated: {rule}. Output only the corrected JSON."
    )


def detect_biases(
    y: PromptText,
    provider,
    cache: ResponseCache | None = None,
) -> DetectionResult:
    """Run attribute detection with parse-repair retries and optional caching.

    Retries up to provider.config.max_retries extra attempts, appending the
    violated rule as a corrective user message each time. Cached raw
    responses are keyed by (model, template hash, prompt text) so repeated
    pipeline runs skip the transport entirely.
    """
    model = provider.config.model
    if cache is not None:
        cached = cache.get(model, DETECTION_TEMPLATE_HASH, y.text)
        if cached is not None:
            try:
                catalog = parse_detection(cached)
                return DetectionResult(catalog, cached, model, 0.0, from_cache=True)
            except DetectionParseError:
                pass  # stale garbage in cache: fall through to a live call

    messages = build_detection_request(y)
    last_raw: str | None = None
    attempts = provider.config.max_retries + 1
    for _ in range(attempts):
        raw, meta = provider.complete(messages)
        last_raw = raw
        try:
            catalog = parse_detection(raw)
        except DetectionParseError as exc:
            messages = messages + [ChatMessage("assistant", raw or "(empty)"), _corrective(exc)]
            continue
        if cache is not None:
            cache.put(model, DETECTION_TEMPLATE_HASH, y.text, raw)
        return DetectionResult(catalog, raw, model, meta.get("latency_s", 0.0))
    raise DetectionFailedError(
        f"detection failed after {attempts} attempts", last_raw
    )


def build_fusion_request(y: PromptText, a: AttributeAssignment) -> list[ChatMessage]:
    """System message is the fusion template verbatim; user message lists the attributes."""
    if not a.entries:
        raise ValidationError("assignment is empty")
    attrs = ", ".join(f"{cat}: {attr}" for cat, attr in a.entries)
    user = f'Original prompt: "{y.text}"\nAttributes to include: "{attrs}"'
    return [ChatMessage("system", FUSION_TEMPLATE), ChatMessage("user", user)]


def _clean_fusion_response(raw: str, y: PromptText, a: AttributeAssignment) -> str | None:
    """Return the accepted single-line rewrite, or None when the response is rejected.

    Accepts a single outer {...} wrapper (the template's correct-format
    example shows one). Rejects empty, multi-line, and embellished responses
    (word count beyond original + attribute values + slack).
    """
    text = _strip_fences(raw)
    if text.startswith("{") and text.endswith("}"):
        text = text[1:-1].strip()
    if not text:
        return None
    if "\n" in text:
        return None
    budget = (
        len(y.text.split())
        + sum(len(attr.split()) for _, attr in a.entries)
        + FUSION_WORD_SLACK
    )
    if len(text.split()) > budget:
        return None
    return text


def fuse_prompt(
    y: PromptText,
    a: AttributeAssignment,
    provider,
) -> FusionResult:
    """Rewrite the prompt to embed the sampled attributes, with deterministic fallback.

    Rejected responses are retried with a corrective message; transport
    failures or exhausted retries fall back to the mechanical joiner, and the
    result is flagged so manifests record the fusion source.
    """
    messages = build_fusion_request(y, a)
    attempts = provider.config.max_retries + 1
    for _ in range(attempts):
        try:
            raw, _meta = provider.complete(messages)
        except TransportError:
            break
        cleaned = _clean_fusion_response(raw, y, a)
        if cleaned is not None:
            return FusionResult(PromptText(cleaned), "llm")
        messages = messages + [
            ChatMessage("assistant", raw or "(empty)"),
            ChatMessage(
                "user",
                "Your previous answer violated: output must be a single concise "
                "rewritten prompt line. Output only the rewritten prompt text.",
            ),
        ]
    return FusionResult(fallback_fuse(y, a), "fallback")
