from .cache import ResponseCache
from .client import (
    DetectionFailedError,
    DetectionParseError,
    DetectionResult,
    FusionResult,
    build_detection_request,
    build_fusion_request,
    detect_biases,
    fuse_prompt,
    parse_detection,
)
from .providers import (
    API_KEY_ENV,
    BASE_URL_ENV,
    ChatMessage,
    HttpChatProvider,
    MockChatProvider,
    ProviderConfig,
    TransportError,
    detection_config,
    fusion_config,
)
from .templates import (
    DETECTION_TEMPLATE,
    DETECTION_TEMPLATE_HASH,
    FUSION_TEMPLATE,
    FUSION_TEMPLATE_HASH,
)

__all__ = [
    "API_KEY_ENV",
    "BASE_URL_ENV",
    "ChatMessage",
    "DetectionFailedError",
    "DetectionParseError",
    "DetectionResult",
    "DETECTION_TEMPLATE",
    "DETECTION_TEMPLATE_HASH",
    "FusionResult",
    "FUSION_TEMPLATE",
    "FUSION_TEMPLATE_HASH",
    "HttpChatProvider",
    "MockChatProvider",
    "ProviderConfig",
    "ResponseCache",
    "TransportError",
    "build_detection_request",
    "build_fusion_request",
    "detect_biases",
    "detection_config",
    "fuse_prompt",
    "fusion_config",
    "parse_detection",
]
