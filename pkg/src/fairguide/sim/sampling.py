"""Reverse-SDE sampling, ancestral attribute-conditioned sampling, and the
analytic stand-in classifier.

Randomness is per-(seed, sample-index): each trajectory owns its stream, so
parallel and serial runs produce identical point sets.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from ..core import ProbabilityVector, ValidationError
from .scores import component_score, mixture_score, posterior_matrix
from .world import GuidanceConfig, NoiseSchedule, PromptMixture

ScoreFn = Callable[[np.ndarray, float], np.ndarray]


def _draw_paths(seed: int, n: int, steps: int, dim: int, extra_uniforms: int = 0):
    """Per-sample initial points, step noises, and optional leading uniforms."""
    inits = np.empty((n, dim))
    noises = np.empty((n, steps, dim))
    uniforms = np.empty((n, extra_uniforms)) if extra_uniforms else None
    for i in range(n):
        rng = np.random.default_rng((seed, i))
        if extra_uniforms:
            uniforms[i] = rng.random(extra_uniforms)
        inits[i] = rng.standard_normal(dim)
        noises[i] = rng.standard_normal((steps, dim))
    return inits, noises, uniforms


def _integrate(
    score_fn: ScoreFn,
    inits: np.ndarray,
    noises: np.ndarray,
    steps: int,
    sched: NoiseSchedule,
) -> np.ndarray:
    """Euler-Maruyama integration of the reverse-time SDE from t=1 to t=0."""
    x = inits.copy()
    dt = 1.0 / steps
    for k in range(steps):
        t = 1.0 - k * dt
        b = sched.beta(t)
        drift = 0.5 * b * x + b * score_fn(x, t)
        x = x + drift * dt + np.sqrt(b * dt) * noises[:, k, :]
    return x


def sample_reverse(
    score_fn: ScoreFn,
    dimension: int,
    n: int,
    steps: int,
    seed: int,
    sched: NoiseSchedule,
) -> np.ndarray:
    """Draw n points by integrating the supplied score from the terminal prior."""
    if steps < 10:
        raise ValidationError("steps must be >= 10")
    if n < 1:
        raise ValidationError("n must be >= 1")
    inits, noises, _ = _draw_paths(seed, n, steps, dimension)
    return _integrate(score_fn, inits, noises, steps, sched)


def sample_ancestral_fair(
    prompt: PromptMixture,
    weights: ProbabilityVector,
    n: int,
    steps: int,
    seed: int,
    sched: NoiseSchedule,
) -> tuple[np.ndarray, list[str]]:
    """Single-draw Monte Carlo sampling: pick one attribute per trajectory from
    the supplied weights, then denoise with only that component's score.

    Returns the points together with each trajectory's drawn attribute.
    """
    if steps < 10:
        raise ValidationError("steps must be >= 10")
    if n < 1:
        raise ValidationError("n must be >= 1")
    by_label = weights.as_dict()
    if set(weights.labels) != set(prompt.attributes):
        raise ValidationError("weights must cover exactly the prompt attributes")
    w = np.array([by_label[a] for a in prompt.attributes])
    cum = np.cumsum(w)

    inits, noises, uniforms = _draw_paths(seed, n, steps, prompt.dimension, extra_uniforms=1)
    drawn_idx = np.minimum(
        np.searchsorted(cum, uniforms[:, 0], side="right"), len(prompt.attributes) - 1
    )

    out = np.empty_like(inits)
    for zi, attr in enumerate(prompt.attributes):
        mask = drawn_idx == zi
        if not mask.any():
            continue
        comp = prompt.components[zi]
        fn = lambda X, t, c=comp: component_score(X, c, sched, t)
        out[mask] = _integrate(fn, inits[mask], noises[mask], steps, sched)
    drawn = [prompt.attributes[int(i)] for i in drawn_idx]
    return out, drawn


def sample_mc(
    prompt: PromptMixture,
    weights: ProbabilityVector,
    k: int,
    n: int,
    steps: int,
    seed: int,
    sched: NoiseSchedule,
) -> np.ndarray:
    """k-sample Monte Carlo score: at every step draw k attributes per trajectory
    and average the selected component scores with equal weight.

    Component picks come from a separate per-sample substream ((seed, i, 1))
    so path noise stays identical across weight sources.
    """
    if k < 1:
        raise ValidationError("k must be >= 1")
    if steps < 10:
        raise ValidationError("steps must be >= 10")
    w = _ordered(prompt, weights)
    cum = np.cumsum(w)
    n_z = len(prompt.attributes)

    inits = np.empty((n, prompt.dimension))
    noises = np.empty((n, steps, prompt.dimension))
    picks = np.empty((n, steps, k), dtype=int)
    for i in range(n):
        rng_path = np.random.default_rng((seed, i, 0))
        inits[i] = rng_path.standard_normal(prompt.dimension)
        noises[i] = rng_path.standard_normal((steps, prompt.dimension))
        rng_mc = np.random.default_rng((seed, i, 1))
        u = rng_mc.random((steps, k))
        picks[i] = np.minimum(np.searchsorted(cum, u, side="right"), n_z - 1)

    x = inits.copy()
    dt = 1.0 / steps
    for step in range(steps):
        t = 1.0 - step * dt
        b = sched.beta(t)
        comp_scores = np.stack(
            [component_score(x, c, sched, t) for c in prompt.components]
        )  # (n_z, n, d)
        counts = np.zeros((n, n_z))
        for j in range(k):
            np.add.at(counts, (np.arange(n), picks[:, step, j]), 1.0)
        s = np.einsum("nz,znd->nd", counts / k, comp_scores)
        x = x + (0.5 * b * x + b * s) * dt + np.sqrt(b * dt) * noises[:, step, :]
    return x


def _ordered(prompt: PromptMixture, weights: ProbabilityVector) -> np.ndarray:
    by_label = weights.as_dict()
    if set(weights.labels) != set(prompt.attributes):
        raise ValidationError("weights must cover exactly the prompt attributes")
    return np.array([by_label[a] for a in prompt.attributes])


def guided_score_source(
    prompt: PromptMixture, config: GuidanceConfig, sched: NoiseSchedule
) -> ScoreFn:
    """Deterministic score source for the exact-sum weight setting."""
    if config.weight_source != "exact":
        raise ValidationError("only the exact weight source yields a pure score fn; "
                              "use sample_mc or sample_ancestral_fair for the others")
    if config.weights is None:
        raise ValidationError("exact weight source needs attribute weights")
    weights = config.weights
    return lambda X, t: mixture_score(X, prompt, weights, sched, t)


def classify(x, prompt: PromptMixture, sched: NoiseSchedule):
    """Maximum-a-posteriori attribute at t=0; ties break to the first attribute
    in catalog order. Stands in for an external demographic classifier."""
    X = np.asarray(x, dtype=float)
    single = X.ndim == 1
    resp = posterior_matrix(X, prompt, sched, 0.0)
    idx = np.argmax(resp, axis=1)
    labels = [prompt.attributes[int(i)] for i in idx]
    return labels[0] if single else labels


def write_samples_csv(
    path: str | Path,
    points: np.ndarray,
    drawn: Sequence[str],
    classified: Sequence[str],
    seed: int,
) -> None:
    """One row per point: coordinates, drawn attribute, classified attribute, seed."""
    points = np.asarray(points)
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"x{i}" for i in range(points.shape[1])] + ["drawn", "classified", "seed"]
        )
        for row, d, c in zip(points, drawn, classified):
            writer.writerow([repr(float(v)) for v in row] + [d, c, seed])
