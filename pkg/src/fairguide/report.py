"""Run evaluation: empirical distributions, targets, and parity per category.

Two label sources are supported. Self-labels read the sampled assignments
straight from the manifest (mock runs), so the category space is the
catalog's. External label files live in the classifier's label space
(gender/race), and statistics targets trigger the race merge onto the
four-label table space.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from .core import AttributeCatalog, ProbabilityVector, ValidationError
from .evalstats import (
    BLS_RACES,
    FAIRFACE_GENDERS,
    FAIRFACE_RACES,
    LabelFile,
    empirical_distribution,
    merge_race_for_bls,
    statistical_parity,
)
from .genbackend import GenerationManifest
from .resample import TargetSpec, build_fair_distribution


@dataclass(frozen=True)
class CategoryReport:
    category: str
    empirical: ProbabilityVector
    target: ProbabilityVector
    sp: float
    excluded: int = 0

    def as_dict(self) -> dict:
        return {
            "empirical": self.empirical.as_dict(),
            "target": self.target.as_dict(),
            "sp": self.sp,
            "excluded": self.excluded,
        }


@dataclass
class RunReport:
    run_id: str
    label_source: str
    categories: list[CategoryReport]
    warnings: list[str] = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "run_id": self.run_id,
            "label_source": self.label_source,
            "categories": {c.category: c.as_dict() for c in self.categories},
            "warnings": list(self.warnings),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2, sort_keys=True)

    def to_text(self) -> str:
        lines = [f"run {self.run_id} (labels: {self.label_source})"]
        for c in self.categories:
            lines.append(f"\n{c.category}  SP = {c.sp:.4f}"
                         + (f"  (excluded: {c.excluded})" if c.excluded else ""))
            lines.append(f"  {'label':<20} {'empirical':>10} {'target':>10}")
            for label in c.empirical.labels:
                lines.append(
                    f"  {label:<20} {c.empirical[label]:>10.4f} {c.target[label]:>10.4f}"
                )
        for w in self.warnings:
            lines.append(f"\nnote: {w}")
        return "\n".join(lines) + "\n"


def _reorder(pv: ProbabilityVector, labels: tuple[str, ...]) -> ProbabilityVector:
    d = pv.as_dict()
    if set(d) != set(labels):
        raise ValidationError(f"cannot reorder {sorted(d)} onto {sorted(labels)}")
    return ProbabilityVector(labels, tuple(d[l] for l in labels))


def _self_label_reports(
    manifest: GenerationManifest, catalog: AttributeCatalog, spec: TargetSpec
) -> list[CategoryReport]:
    dist = build_fair_distribution(catalog, spec)
    reports = []
    for cat, attrs in catalog.entries:
        labels = [e.assignment.as_dict()[cat] for e in manifest.entries]
        emp = empirical_distribution(labels, attrs)
        target = _reorder(dist.weights(cat), attrs)
        reports.append(CategoryReport(cat, emp, target, statistical_parity(emp, target)))
    return reports


def _external_target(
    category: str, label_set: tuple[str, ...], spec: TargetSpec
) -> tuple[ProbabilityVector, bool]:
    """Target vector in classifier space; second value marks a race merge."""
    is_race = category.lower() == "race"
    if spec.kind == "statistics":
        row = spec.table.lookup(spec.occupation)
        for cat, pv in row.items():
            if cat.lower() == category.lower():
                if is_race:
                    return _reorder(pv, BLS_RACES), True
                lowered = {l.lower(): v for l, v in pv.as_dict().items()}
                if set(lowered) == {l.lower() for l in label_set}:
                    return (
                        ProbabilityVector(
                            label_set, tuple(lowered[l.lower()] for l in label_set)
                        ),
                        False,
                    )
                raise ValidationError(
                    f"statistics labels for {category!r} do not match classifier labels"
                )
        raise ValidationError(f"statistics table has no row category {category!r}")
    if spec.kind == "uniform":
        k = len(label_set)
        return ProbabilityVector(label_set, tuple(1.0 / k for _ in label_set)), False
    # custom targets in classifier space: match by category name
    pv = spec.custom.weights(category)
    return _reorder(pv, label_set), False


def _external_label_reports(
    manifest: GenerationManifest, label_file: LabelFile, spec: TargetSpec
) -> tuple[list[CategoryReport], list[str]]:
    ids = [e.image_ref for e in manifest.entries]
    reports = []
    notes: list[str] = []
    for category in label_file.categories():
        labels, excluded = label_file.labels_for(category, ids)
        if excluded:
            notes.append(f"{category}: {excluded} images had no label and were excluded")
        if category.lower() == "gender":
            label_set: tuple[str, ...] = FAIRFACE_GENDERS
        elif category.lower() == "race":
            label_set = FAIRFACE_RACES
        else:
            label_set = tuple(dict.fromkeys(labels))
        emp = empirical_distribution(labels, label_set)
        merged = False
        if category.lower() == "race" and spec.kind == "statistics":
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                emp = merge_race_for_bls(emp)
            merged = True
        target, target_merged = _external_target(category, label_set, spec)
        if merged or target_merged:
            notes.append(f"{category}: " + _merge_note())
        reports.append(
            CategoryReport(category, emp, target, statistical_parity(emp, target), excluded)
        )
    return reports, notes


def _merge_note() -> str:
    from .evalstats import RACE_MERGE_WARNING

    return RACE_MERGE_WARNING


def evaluate_run(
    manifest: GenerationManifest,
    spec: TargetSpec,
    label_file: LabelFile | None = None,
    allow_partial: bool = False,
) -> RunReport:
    """Per-category empirical distribution, target vector, and parity score."""
    if not manifest.entries:
        raise ValidationError("manifest has no entries")
    if not manifest.complete and not allow_partial:
        raise ValidationError(
            f"manifest is incomplete ({len(manifest.entries)} of {manifest.config.get('n')}); "
            "pass allow_partial to evaluate anyway"
        )
    catalog = AttributeCatalog.from_dict(manifest.config["catalog"])
    if label_file is None:
        reports = _self_label_reports(manifest, catalog, spec)
        return RunReport(manifest.run_id, "manifest-assignments", reports)
    reports, notes = _external_label_reports(manifest, label_file, spec)
    return RunReport(manifest.run_id, label_file.source, reports, notes)
