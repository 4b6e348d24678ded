"""Prompt templates for attribute detection and prompt fusion.

The templates ship as text fixtures and are treated as immutable: builders
must reproduce them byte-for-byte, and the golden tests pin their hashes.
"""

from __future__ import annotations

import hashlib
from importlib import resources


def _load(name: str) -> str:
    return resources.files("fairguide.llm").joinpath("templates", name).read_text("utf-8")


DETECTION_TEMPLATE = _load("detection_system.txt")
FUSION_TEMPLATE = _load("fusion_system.txt")

# The detection template's correct-format answer for "a firefighter"; doubles
# as the default script for mock detection. Note the trailing comma the
# parser must tolerate.
DETECTION_EXAMPLE_JSON = """{
  "gender": ["male", "female", "non-binary"],
  "age": ["young adult", "middle-aged", "elderly"],
  "race": ["White", "Asian", "Black", "Hispanic"],
}"""


def template_hash(template: str) -> str:
    return hashlib.sha256(template.encode("utf-8")).hexdigest()


DETECTION_TEMPLATE_HASH = template_hash(DETECTION_TEMPLATE)
FUSION_TEMPLATE_HASH = template_hash(FUSION_TEMPLATE)
