"""Fairness metrics and statistical tests computed from labels and embeddings.

Conventions pinned here because reference implementations vary: sample
covariance always uses the n-1 denominator; the bootstrap p-value is the
strict proportion of resampled differences <= 0 with no smoothing; the
Mann-Whitney normal approximation applies tie and 0.5 continuity
corrections, with exact enumeration anchoring small no-tie inputs.
"""

from __future__ import annotations

import csv
import functools
import itertools
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import ProbabilityVector, ValidationError

# Label sets produced by the external demographic classifier.
FAIRFACE_GENDERS = ("male", "female")
FAIRFACE_RACES = (
    "White",
    "Southeast Asian",
    "Middle Eastern",
    "Latino_Hispanic",
    "Indian",
    "East Asian",
    "Black",
)
BLS_RACES = ("White", "Black", "Asian", "Hispanic")

RACE_MERGE_WARNING = (
    "race merge: Southeast Asian + East Asian -> Asian, Latino_Hispanic -> Hispanic; "
    "Middle Eastern and Indian dropped and the remainder renormalized"
)


class CoverageError(ValidationError):
    """Label data does not cover the ids it must; carries the missing ids."""

    def __init__(self, missing: Sequence[str]):
        super().__init__(f"labels missing for {len(missing)} ids: {sorted(missing)}")
        self.missing = sorted(missing)


@dataclass(frozen=True)
class LabelFile:
    """Predicted labels per image id and category, from an external classifier.

    CSV format: header image_id,category,label. An empty label value means
    no face was detected; such rows are excluded from empirical counts and
    surfaced as an exclusion count.
    """

    rows: tuple[tuple[str, str, str], ...]  # (image_id, category, label)
    source: str = "external"

    def __post_init__(self) -> None:
        seen = set()
        for image_id, category, _ in self.rows:
            key = (image_id, category)
            if key in seen:
                raise ValidationError(f"duplicate label row for {key}")
            seen.add(key)

    @classmethod
    def from_csv(cls, path: str | Path, source: str | None = None) -> "LabelFile":
        rows = []
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            expected = {"image_id", "category", "label"}
            if reader.fieldnames is None or not expected.issubset(reader.fieldnames):
                raise ValidationError(
                    f"label CSV must have header image_id,category,label, got {reader.fieldnames}"
                )
            for rec in reader:
                rows.append((rec["image_id"], rec["category"], rec["label"].strip()))
        return cls(tuple(rows), source or str(path))

    def categories(self) -> tuple[str, ...]:
        out: list[str] = []
        for _, category, _ in self.rows:
            if category not in out:
                out.append(category)
        return tuple(out)

    def labels_for(self, category: str, ids: Sequence[str]) -> tuple[list[str], int]:
        """Labels for the given ids in order; raises CoverageError on missing ids.

        Returns (labels, excluded_count) where empty labels are excluded.
        """
        table = {
            image_id: label
            for image_id, cat, label in self.rows
            if cat == category
        }
        missing = [i for i in ids if i not in table]
        if missing:
            raise CoverageError(missing)
        labels = [table[i] for i in ids]
        kept = [l for l in labels if l]
        return kept, len(labels) - len(kept)


@dataclass(frozen=True)
class EmbeddingSet:
    """Feature vectors, one row per image; n >= 2 for covariance-based metrics."""

    matrix: np.ndarray
    ids: tuple[str, ...] | None = None
    normalized: bool = False

    def __post_init__(self) -> None:
        m = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", m)
        if m.ndim != 2:
            raise ValidationError("embedding matrix must be 2-D")
        if not np.isfinite(m).all():
            raise ValidationError("embedding matrix has non-finite entries")
        if self.ids is not None and len(self.ids) != m.shape[0]:
            raise ValidationError("id count does not match row count")

    @classmethod
    def from_csv(cls, path: str | Path) -> "EmbeddingSet":
        """CSV of floats, one row per vector, optional leading image_id column."""
        rows: list[list[float]] = []
        ids: list[str] = []
        has_ids = None
        with Path(path).open(newline="", encoding="utf-8") as fh:
            for rec in csv.reader(fh):
                if not rec:
                    continue
                if has_ids is None:
                    try:
                        float(rec[0])
                        has_ids = False
                    except ValueError:
                        has_ids = True
                if has_ids:
                    ids.append(rec[0])
                    rows.append([float(v) for v in rec[1:]])
                else:
                    rows.append([float(v) for v in rec])
        return cls(np.array(rows), tuple(ids) if has_ids else None)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]


@dataclass(frozen=True)
class TestReport:
    """Outcome of a hypothesis test with the parameters needed to reproduce it."""

    __test__ = False  # not a pytest class despite the name

    statistic: float
    p_value: float
    method: str
    params: dict = field(default_factory=dict)
    seed: int | None = None

    def __post_init__(self) -> None:
        if not 0.0 <= self.p_value <= 1.0:
            raise ValidationError(f"p-value {self.p_value} outside [0, 1]")

    def as_dict(self) -> dict:
        return {
            "statistic": self.statistic,
            "p_value": self.p_value,
            "method": self.method,
            "params": dict(self.params),
            "seed": self.seed,
        }


def empirical_distribution(
    labels: Sequence[str], label_set: Sequence[str]
) -> ProbabilityVector:
    """Counts/n over the declared label set, zero-count labels included."""
    if not labels:
        raise ValidationError("no labels")
    order = list(label_set)
    index = {l: i for i, l in enumerate(order)}
    counts = np.zeros(len(order))
    for l in labels:
        if l not in index:
            raise ValidationError(f"label {l!r} not in declared label set {order}")
        counts[index[l]] += 1
    return ProbabilityVector(tuple(order), tuple(counts / len(labels)))


def merge_race_for_bls(p: ProbabilityVector) -> ProbabilityVector:
    """Collapse the 7 classifier race labels onto the 4 statistics-table labels.

    Southeast Asian + East Asian form Asian and Latino_Hispanic maps to
    Hispanic; Middle Eastern and Indian have no statistics counterpart, so
    they are dropped and the remaining mass renormalized.
    """
    if set(p.labels) != set(FAIRFACE_RACES):
        raise ValidationError(
            f"expected the 7 classifier race labels, got {sorted(p.labels)}"
        )
    d = p.as_dict()
    merged = {
        "White": d["White"],
        "Black": d["Black"],
        "Asian": d["Southeast Asian"] + d["East Asian"],
        "Hispanic": d["Latino_Hispanic"],
    }
    total = math.fsum(merged.values())
    if total <= 0:
        raise ValidationError("all probability mass fell on dropped race labels")
    warnings.warn(RACE_MERGE_WARNING)
    return ProbabilityVector(BLS_RACES, tuple(merged[l] / total for l in BLS_RACES))


def statistical_parity(p: ProbabilityVector, q: ProbabilityVector) -> float:
    """L2 distance between two probability vectors over the same label set."""
    if p.labels != q.labels:
        raise ValidationError(f"label sets differ: {p.labels} vs {q.labels}")
    return float(np.linalg.norm(np.asarray(p.values) - np.asarray(q.values)))


def _sp_of_labels(indices: np.ndarray, k: int, target: np.ndarray) -> float:
    counts = np.bincount(indices, minlength=k)
    return float(np.linalg.norm(counts / len(indices) - target))


def bootstrap_sp_test(
    labels_a: Sequence[str],
    labels_b: Sequence[str],
    target: ProbabilityVector,
    n_boot: int = 1000,
    seed: int = 0,
) -> TestReport:
    """One-sided nonparametric bootstrap for SP_b < SP_a against a target.

    Each iteration resamples both label lists with replacement at their own
    sizes, computes both parity scores against the target, and takes the
    difference D = SP_a - SP_b. The p-value is the proportion of iterations
    with D <= 0. Iteration i draws from substream (seed, i), so chunked and
    serial execution agree.
    """
    if n_boot < 1:
        raise ValidationError("n_boot must be >= 1")
    if not labels_a or not labels_b:
        raise ValidationError("label lists must be non-empty")
    order = {l: i for i, l in enumerate(target.labels)}
    k = len(target.labels)
    try:
        ia = np.array([order[l] for l in labels_a])
        ib = np.array([order[l] for l in labels_b])
    except KeyError as exc:
        raise ValidationError(f"label {exc} not in target label set") from exc
    tv = np.asarray(target.values)

    sp_a = _sp_of_labels(ia, k, tv)
    sp_b = _sp_of_labels(ib, k, tv)

    at_most_zero = 0
    for i in range(n_boot):
        rng = np.random.default_rng((seed, i))
        ra = ia[rng.integers(0, len(ia), len(ia))]
        rb = ib[rng.integers(0, len(ib), len(ib))]
        d = _sp_of_labels(ra, k, tv) - _sp_of_labels(rb, k, tv)
        if d <= 0:
            at_most_zero += 1
    return TestReport(
        statistic=sp_a - sp_b,
        p_value=at_most_zero / n_boot,
        method="bootstrap_sp_one_sided",
        params={"n_boot": n_boot, "sp_a": sp_a, "sp_b": sp_b},
        seed=seed,
    )


def _u_statistic(xs: Sequence[float], ys: Sequence[float]) -> float:
    """U for xs, counting ties as 1/2."""
    u = 0.0
    for xv in xs:
        for yv in ys:
            if xv > yv:
                u += 1.0
            elif xv == yv:
                u += 0.5
    return u


@functools.lru_cache(maxsize=None)
def _exact_u_counts(n_x: int, n_y: int) -> tuple[int, ...]:
    """Distribution of U over all rank arrangements (no ties): counts[u]."""
    n = n_x + n_y
    base = n_x * (n_x - 1) // 2
    counts = [0] * (n_x * n_y + 1)
    for positions in itertools.combinations(range(n), n_x):
        counts[sum(positions) - base] += 1
    return tuple(counts)


def _exact_u_tail(n_x: int, n_y: int, u_obs: float) -> float:
    """P(U >= u_obs) under H0 by enumerating rank arrangements (no ties)."""
    counts = _exact_u_counts(n_x, n_y)
    total = sum(counts)
    ge = sum(c for u, c in enumerate(counts) if u >= u_obs - 1e-12)
    return ge / total


def _ranks_with_ties(values: Sequence[float]) -> tuple[list[float], list[int]]:
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    tie_sizes = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        avg = (i + j) / 2.0 + 1.0
        for k in range(i, j + 1):
            ranks[order[k]] = avg
        tie_sizes.append(j - i + 1)
        i = j + 1
    return ranks, tie_sizes


def _norm_sf(z: float) -> float:
    return 0.5 * math.erfc(z / math.sqrt(2.0))


def mann_whitney_one_sided(
    xs: Sequence[float], ys: Sequence[float], method: str = "auto"
) -> TestReport:
    """One-sided Mann-Whitney U test of H1: xs stochastically greater than ys.

    method "auto" uses exact enumeration over rank arrangements when
    n_x + n_y <= 12 and there are no ties, else the normal approximation with
    tie correction and a 0.5 continuity correction. "exact" and "normal"
    force one path (exact requires no ties).
    """
    if not xs or not ys:
        raise ValidationError("both samples must be non-empty")
    if method not in ("auto", "exact", "normal"):
        raise ValidationError(f"unknown method {method!r}")
    n_x, n_y = len(xs), len(ys)
    u = _u_statistic(xs, ys)
    combined = list(xs) + list(ys)
    no_ties = len(set(combined)) == len(combined)

    if method == "exact" or (method == "auto" and no_ties and n_x + n_y <= 12):
        if not no_ties:
            raise ValidationError("exact enumeration requires tie-free samples")
        if math.comb(n_x + n_y, n_x) > 1_000_000:
            raise ValidationError("exact enumeration too large; use the normal method")
        p = _exact_u_tail(n_x, n_y, u)
        return TestReport(u, p, "exact_enumeration", {"n_x": n_x, "n_y": n_y})

    _, tie_sizes = _ranks_with_ties(combined)
    n = n_x + n_y
    mean_u = n_x * n_y / 2.0
    tie_term = sum(t**3 - t for t in tie_sizes) / (n * (n - 1)) if n > 1 else 0.0
    var_u = n_x * n_y / 12.0 * ((n + 1) - tie_term)
    if var_u <= 0:
        # every value identical; no evidence either way
        return TestReport(u, 0.5, "normal_approx", {"n_x": n_x, "n_y": n_y, "degenerate": True})
    z = (u - mean_u - 0.5) / math.sqrt(var_u)
    return TestReport(
        u, _norm_sf(z), "normal_approx", {"n_x": n_x, "n_y": n_y, "z": z}
    )


def trace_diversity(e: EmbeddingSet) -> float:
    """Trace of the sample covariance (n-1 denominator) of the embedding rows."""
    if e.n < 2:
        raise ValidationError("need at least 2 embeddings for covariance")
    cov = np.cov(e.matrix, rowvar=False)
    return float(np.trace(np.atleast_2d(cov)))


def clip_alignment_mean(text_embedding: np.ndarray, images: EmbeddingSet) -> float:
    """Mean dot product of the text embedding with each image embedding.

    Vectors are expected unit-norm; anything off by more than 1e-6 is
    renormalized with a warning.
    """
    text = np.asarray(text_embedding, dtype=float)
    if text.ndim != 1 or text.size != images.matrix.shape[1]:
        raise ValidationError("text embedding dimension does not match images")
    m = images.matrix
    norms = np.linalg.norm(m, axis=1)
    tnorm = np.linalg.norm(text)
    if abs(tnorm - 1.0) > 1e-6 or np.any(np.abs(norms - 1.0) > 1e-6):
        warnings.warn("embeddings not unit-norm; renormalizing")
        text = text / tnorm
        m = m / norms[:, None]
    return float(np.mean(m @ text))


def _sym_sqrtm(mat: np.ndarray) -> np.ndarray:
    """Matrix square root of a symmetric PSD matrix via eigen-decomposition,
    clamping small negative eigenvalues to zero."""
    sym = (mat + mat.T) / 2.0
    vals, vecs = np.linalg.eigh(sym)
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def frechet_from_moments(
    mu_a: np.ndarray, cov_a: np.ndarray, mu_b: np.ndarray, cov_b: np.ndarray
) -> float:
    """||mu_a - mu_b||^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^{1/2})."""
    diff = np.asarray(mu_a) - np.asarray(mu_b)
    a_half = _sym_sqrtm(np.asarray(cov_a))
    inner = _sym_sqrtm(a_half @ np.asarray(cov_b) @ a_half)
    value = float(diff @ diff + np.trace(cov_a) + np.trace(cov_b) - 2.0 * np.trace(inner))
    return max(value, 0.0)


def frechet_distance(a: EmbeddingSet, b: EmbeddingSet) -> float:
    """Frechet distance between the Gaussian moment matches of two embedding sets."""
    if a.n < 2 or b.n < 2:
        raise ValidationError("need at least 2 embeddings per set")
    if a.matrix.shape[1] != b.matrix.shape[1]:
        raise ValidationError("embedding dimensions differ")
    mu_a, mu_b = a.matrix.mean(axis=0), b.matrix.mean(axis=0)
    cov_a = np.atleast_2d(np.cov(a.matrix, rowvar=False))
    cov_b = np.atleast_2d(np.cov(b.matrix, rowvar=False))
    return frechet_from_moments(mu_a, cov_a, mu_b, cov_b)
