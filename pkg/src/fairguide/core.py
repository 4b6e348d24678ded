"""Shared domain types: prompts, attribute catalogs, distributions, probability vectors.

Everything here is schema and validation only; no fairness semantics.
All types are immutable values and safe to share across threads.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

# Sum-to-one tolerance for probability validation; double precision over
# at most ~10^2 outcomes keeps accumulated error well below this.
PROB_ATOL = 1e-9


class ValidationError(ValueError):
    """Input data violates a documented invariant."""


@dataclass(frozen=True)
class PromptText:
    """Free-text input prompt; must be non-empty after trimming."""

    text: str

    def __post_init__(self) -> None:
        if not self.text.strip():
            raise ValidationError("prompt text is empty")

    def __str__(self) -> str:
        return self.text


@dataclass(frozen=True)
class ProbabilityVector:
    """Named discrete distribution: ordered labels with probabilities."""

    labels: tuple[str, ...]
    values: tuple[float, ...]

    def __post_init__(self) -> None:
        if len(self.labels) != len(self.values):
            raise ValidationError("labels and values differ in length")
        if not self.labels:
            raise ValidationError("probability vector is empty")
        if len(set(self.labels)) != len(self.labels):
            raise ValidationError("duplicate labels in probability vector")
        if any(v < 0 for v in self.values):
            raise ValidationError("negative probability")
        total = math.fsum(self.values)
        if abs(total - 1.0) > PROB_ATOL:
            raise ValidationError(f"probabilities sum to {total!r}, not 1")

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.labels, self.values))

    def __getitem__(self, label: str) -> float:
        try:
            return self.values[self.labels.index(label)]
        except ValueError:
            raise KeyError(label) from None


def normalize_weights(raw: Iterable[tuple[str, float]]) -> ProbabilityVector:
    """Scale nonnegative weights so they sum to one, preserving label order.

    Raises ValidationError on empty input, negative weights, or all-zero
    weights. Idempotent and scale-invariant up to double rounding.
    """
    pairs = list(raw)
    if not pairs:
        raise ValidationError("no weights to normalize")
    labels = tuple(label for label, _ in pairs)
    values = [float(v) for _, v in pairs]
    if any(v < 0 for v in values):
        raise ValidationError("weights must be nonnegative")
    total = math.fsum(values)
    if total <= 0:
        raise ValidationError("weights sum to zero")
    return ProbabilityVector(labels, tuple(v / total for v in values))


@dataclass(frozen=True)
class AttributeCatalog:
    """Ordered categories, each with an ordered list of attribute values.

    Construction never rejects malformed catalogs; use validate_catalog to
    obtain the list of rule violations. Names are stored verbatim apart from
    trimming outer whitespace (done by from_dict / parsing paths).
    """

    entries: tuple[tuple[str, tuple[str, ...]], ...]

    @classmethod
    def from_dict(cls, data: Mapping[str, Sequence[str]]) -> "AttributeCatalog":
        entries = tuple(
            (str(cat).strip(), tuple(str(a).strip() for a in attrs))
            for cat, attrs in data.items()
        )
        return cls(entries)

    def as_dict(self) -> dict[str, list[str]]:
        return {cat: list(attrs) for cat, attrs in self.entries}

    @property
    def category_names(self) -> tuple[str, ...]:
        return tuple(cat for cat, _ in self.entries)

    def attributes(self, category: str) -> tuple[str, ...]:
        for cat, attrs in self.entries:
            if cat == category:
                return attrs
        raise KeyError(category)

    def __contains__(self, category: str) -> bool:
        return any(cat == category for cat, _ in self.entries)

    def to_json(self) -> str:
        """Canonical interchange encoding: object of category -> attribute array."""
        return json.dumps(self.as_dict(), ensure_ascii=False, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "AttributeCatalog":
        data = json.loads(text)
        if not isinstance(data, dict):
            raise ValidationError("catalog JSON must be an object")
        return cls.from_dict(data)


def validate_catalog(catalog: AttributeCatalog) -> list[str]:
    """Return every violated catalog rule; an empty list means the catalog is ok.

    Rules: at least 2 categories, each with at least 2 attributes, no
    duplicate attributes within a category, no empty names.
    """
    violations: list[str] = []
    n = len(catalog.entries)
    if n < 2:
        violations.append(f"catalog has only {n} categories (at least 2 required)")
    seen_cats: set[str] = set()
    for cat, attrs in catalog.entries:
        if not cat:
            violations.append("empty category name")
        if cat in seen_cats:
            violations.append(f"duplicate category {cat!r}")
        seen_cats.add(cat)
        if len(attrs) < 2:
            violations.append(
                f"category {cat!r} has only {len(attrs)} attributes (at least 2 required)"
            )
        seen_attrs: set[str] = set()
        for a in attrs:
            if not a:
                violations.append(f"empty attribute name in category {cat!r}")
            if a in seen_attrs:
                violations.append(f"duplicate attribute {a!r} in category {cat!r}")
            seen_attrs.add(a)
    return violations


def ensure_valid_catalog(catalog: AttributeCatalog) -> AttributeCatalog:
    violations = validate_catalog(catalog)
    if violations:
        raise ValidationError("; ".join(violations))
    return catalog


@dataclass(frozen=True)
class AttributeDistribution:
    """Per-category probability weights over a catalog's attributes."""

    entries: tuple[tuple[str, ProbabilityVector], ...]

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Mapping[str, float]]
    ) -> "AttributeDistribution":
        return cls(
            tuple(
                (cat, ProbabilityVector(tuple(w.keys()), tuple(float(v) for v in w.values())))
                for cat, w in data.items()
            )
        )

    def as_dict(self) -> dict[str, dict[str, float]]:
        return {cat: pv.as_dict() for cat, pv in self.entries}

    @property
    def category_names(self) -> tuple[str, ...]:
        return tuple(cat for cat, _ in self.entries)

    def weights(self, category: str) -> ProbabilityVector:
        for cat, pv in self.entries:
            if cat == category:
                return pv
        raise KeyError(category)

    def validate_against(self, catalog: AttributeCatalog) -> None:
        """Require one weight vector per catalog category, over exactly its attributes.

        Order-insensitive: builders normalize ordering to the catalog's.
        """
        if set(self.category_names) != set(catalog.category_names):
            raise ValidationError(
                f"distribution categories {sorted(self.category_names)} do not match "
                f"catalog categories {sorted(catalog.category_names)}"
            )
        for cat, pv in self.entries:
            if set(pv.labels) != set(catalog.attributes(cat)):
                unknown = set(pv.labels) - set(catalog.attributes(cat))
                missing = set(catalog.attributes(cat)) - set(pv.labels)
                raise ValidationError(
                    f"category {cat!r}: unknown attributes {sorted(unknown)}, "
                    f"missing attributes {sorted(missing)}"
                )


@dataclass(frozen=True)
class AttributeAssignment:
    """One chosen attribute per category (a sampled joint value)."""

    entries: tuple[tuple[str, str], ...]

    @classmethod
    def from_dict(cls, data: Mapping[str, str]) -> "AttributeAssignment":
        return cls(tuple((str(c), str(a)) for c, a in data.items()))

    def as_dict(self) -> dict[str, str]:
        return dict(self.entries)

    def validate_against(self, catalog: AttributeCatalog) -> None:
        for cat, attr in self.entries:
            if cat not in catalog:
                raise ValidationError(f"assignment category {cat!r} not in catalog")
            if attr not in catalog.attributes(cat):
                raise ValidationError(
                    f"assignment value {attr!r} not an attribute of category {cat!r}"
                )
