"""Bias-aware text-to-image orchestration toolkit.

Detects bias-prone attribute categories in prompts, resamples attributes
from fair distributions, rewrites prompts, orchestrates batch generation
against pluggable image backends, and verifies the guidance mathematics and
evaluation statistics with analytic oracles.
"""

from .core import (
    AttributeAssignment,
    AttributeCatalog,
    AttributeDistribution,
    ProbabilityVector,
    PromptText,
    ValidationError,
    normalize_weights,
    validate_catalog,
)

__version__ = "0.1.0"

__all__ = [
    "AttributeAssignment",
    "AttributeCatalog",
    "AttributeDistribution",
    "ProbabilityVector",
    "PromptText",
    "ValidationError",
    "normalize_weights",
    "validate_catalog",
    "__version__",
]
