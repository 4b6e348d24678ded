"""Fair attribute distributions, seeded assignment sampling, and prompt transforms.

Categories are sampled independently (a product distribution); there is no
joint demographic model. Sampling uses counter-based Philox streams keyed by
(seed, sample index, category name) so draws are order-independent and
resumable.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Mapping

import numpy as np

from .core import (
    AttributeAssignment,
    AttributeCatalog,
    AttributeDistribution,
    ProbabilityVector,
    PromptText,
    ValidationError,
    normalize_weights,
)

# Statistics tables and catalogs may name the same group differently.
_ATTRIBUTE_ALIASES = {"hispanic": "latino_hispanic", "latino_hispanic": "hispanic"}

ENTIGEN_SUFFIX = ", if all individuals can be {profession} irrespective of their gender and race"

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class StatisticsTable:
    """Occupation rows mapping category name (gender/race) to a probability vector.

    File format: JSON {occupation: {category: {label: weight}}}; weights may
    be percentages and are normalized on load.
    """

    rows: tuple[tuple[str, tuple[tuple[str, ProbabilityVector], ...]], ...]

    @classmethod
    def from_dict(cls, data: Mapping[str, Mapping[str, Mapping[str, float]]]) -> "StatisticsTable":
        rows = []
        for occ, cats in data.items():
            row = tuple(
                (cat, normalize_weights(list(weights.items())))
                for cat, weights in cats.items()
            )
            rows.append((occ.strip(), row))
        return cls(tuple(rows))

    @classmethod
    def from_file(cls, path: str | Path) -> "StatisticsTable":
        return cls.from_dict(json.loads(Path(path).read_text("utf-8")))

    @property
    def occupations(self) -> tuple[str, ...]:
        return tuple(occ for occ, _ in self.rows)

    def lookup(self, occupation: str) -> dict[str, ProbabilityVector]:
        """Case-insensitive row lookup on the trimmed occupation name."""
        wanted = occupation.strip().lower()
        for occ, row in self.rows:
            if occ.lower() == wanted:
                return dict(row)
        raise KeyError(f"occupation {occupation!r} not in statistics table")


def bundled_statistics_table() -> StatisticsTable:
    """The packaged 2024 BLS five-occupation gender/race table."""
    text = resources.files("fairguide.data").joinpath("bls_2024.json").read_text("utf-8")
    return StatisticsTable.from_dict(json.loads(text))


@dataclass(frozen=True)
class TargetSpec:
    """How to build the target attribute distribution for a catalog."""

    kind: str  # "uniform" | "statistics" | "custom"
    table: StatisticsTable | None = None
    occupation: str | None = None
    custom: AttributeDistribution | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "statistics", "custom"):
            raise ValidationError(f"unknown target kind {self.kind!r}")
        if self.kind == "statistics" and (self.table is None or not self.occupation):
            raise ValidationError("statistics target needs a table and an occupation")
        if self.kind == "custom" and self.custom is None:
            raise ValidationError("custom target needs an explicit distribution")

    @classmethod
    def uniform(cls) -> "TargetSpec":
        return cls("uniform")

    @classmethod
    def statistics(cls, table: StatisticsTable, occupation: str) -> "TargetSpec":
        return cls("statistics", table=table, occupation=occupation)

    @classmethod
    def custom_spec(cls, dist: AttributeDistribution) -> "TargetSpec":
        return cls("custom", custom=dist)

    def describe(self) -> dict:
        if self.kind == "statistics":
            return {"kind": "statistics", "occupation": self.occupation}
        return {"kind": self.kind}


def _statistics_weights(
    category: str, attrs: tuple[str, ...], row: dict[str, ProbabilityVector]
) -> ProbabilityVector:
    """Map a table row's weights onto catalog attributes by lowercase name."""
    table_pv = None
    for cat, pv in row.items():
        if cat.lower() == category.lower():
            table_pv = pv
            break
    if table_pv is None:
        raise KeyError(category)

    by_name = {label.lower(): v for label, v in zip(table_pv.labels, table_pv.values)}
    values = []
    for attr in attrs:
        key = attr.lower()
        if key in by_name:
            values.append(by_name.pop(key))
        elif _ATTRIBUTE_ALIASES.get(key) in by_name:
            values.append(by_name.pop(_ATTRIBUTE_ALIASES[key]))
        else:
            warnings.warn(
                f"catalog attribute {attr!r} in category {category!r} has no "
                f"statistics entry; weight set to 0"
            )
            values.append(0.0)
    if by_name:
        warnings.warn(
            f"statistics labels {sorted(by_name)} in category {category!r} have no "
            f"catalog attribute; remaining weights renormalized"
        )
    if sum(values) <= 0:
        raise ValidationError(
            f"no statistics weight maps onto category {category!r} attributes"
        )
    return normalize_weights(list(zip(attrs, values)))


def build_fair_distribution(
    catalog: AttributeCatalog, spec: TargetSpec
) -> AttributeDistribution:
    """Build the target distribution over a catalog's attributes.

    uniform: every attribute gets 1/|category|. statistics: gender/race rows
    come from the table (unmatched catalog attributes get weight 0 with a
    warning) and every other category falls back to uniform. custom: the
    explicit distribution, validated and reordered to catalog order.
    """
    if spec.kind == "uniform":
        entries = tuple(
            (cat, ProbabilityVector(attrs, tuple(1.0 / len(attrs) for _ in attrs)))
            for cat, attrs in catalog.entries
        )
        return AttributeDistribution(entries)

    if spec.kind == "statistics":
        assert spec.table is not None and spec.occupation is not None
        row = spec.table.lookup(spec.occupation)
        row_cats = {c.lower() for c in row}
        entries = []
        for cat, attrs in catalog.entries:
            if cat.lower() in row_cats:
                entries.append((cat, _statistics_weights(cat, attrs, row)))
            else:
                entries.append(
                    (cat, ProbabilityVector(attrs, tuple(1.0 / len(attrs) for _ in attrs)))
                )
        return AttributeDistribution(tuple(entries))

    assert spec.custom is not None
    spec.custom.validate_against(catalog)
    # Reorder to catalog order so downstream output is deterministic.
    entries = []
    for cat, attrs in catalog.entries:
        pv = spec.custom.weights(cat)
        by_label = pv.as_dict()
        entries.append((cat, ProbabilityVector(attrs, tuple(by_label[a] for a in attrs))))
    return AttributeDistribution(tuple(entries))


def _stream_uniform(seed: int, index: int, category: str) -> float:
    """One uniform draw from the counter-based stream for (seed, index, category)."""
    cat_key = int.from_bytes(
        hashlib.blake2b(category.encode("utf-8"), digest_size=8).digest(), "little"
    )
    bg = np.random.Philox(
        key=np.array([seed & _MASK64, cat_key], dtype=np.uint64),
        counter=np.array([index & _MASK64, 0, 0, 0], dtype=np.uint64),
    )
    return float(np.random.Generator(bg).random())


def sample_assignment(
    dist: AttributeDistribution, seed: int, index: int
) -> AttributeAssignment:
    """Draw one attribute per category by inverse CDF; deterministic per (seed, index)."""
    if seed < 0 or index < 0:
        raise ValidationError("seed and index must be nonnegative")
    chosen = []
    for cat, pv in dist.entries:
        u = _stream_uniform(seed, index, cat)
        cum = np.cumsum(pv.values)
        i = int(np.searchsorted(cum, u, side="right"))
        i = min(i, len(pv.labels) - 1)
        chosen.append((cat, pv.labels[i]))
    return AttributeAssignment(tuple(chosen))


def fallback_fuse(y: PromptText, a: AttributeAssignment) -> PromptText:
    """Mechanical fusion: append attribute values to the prompt in catalog order."""
    if not a.entries:
        raise ValidationError("assignment is empty")
    return PromptText(y.text + ", " + ", ".join(attr for _, attr in a.entries))


def entigen_transform(y: PromptText, profession: str) -> PromptText:
    """Append the fixed ethical-intervention suffix for the given profession."""
    profession = profession.strip()
    if not profession:
        raise ValidationError("profession is empty")
    return PromptText(y.text + ENTIGEN_SUFFIX.format(profession=profession))


def subset_catalog(catalog: AttributeCatalog, names: list[str]) -> AttributeCatalog:
    """Restrict a catalog to the named categories (detection order preserved)."""
    missing = [n for n in names if n not in catalog]
    if missing:
        raise ValidationError(f"categories not in catalog: {missing}")
    return AttributeCatalog(
        tuple((cat, attrs) for cat, attrs in catalog.entries if cat in names)
    )
