"""Analytic Gaussian-mixture worlds with a variance-preserving noise schedule.

Every density here is closed-form, so score functions, posteriors, and
guidance identities can be checked numerically at desk scale.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..core import ProbabilityVector, ValidationError, normalize_weights

SYM_ATOL = 1e-12


@dataclass(frozen=True)
class GaussianComponent:
    """One Gaussian piece of a conditional density: mean vector + SPD covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self) -> None:
        mean = np.asarray(self.mean, dtype=float)
        cov = np.asarray(self.cov, dtype=float)
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)
        if mean.ndim != 1:
            raise ValidationError("component mean must be a vector")
        if cov.shape != (mean.size, mean.size):
            raise ValidationError("covariance shape does not match mean dimension")
        if np.max(np.abs(cov - cov.T)) > SYM_ATOL:
            raise ValidationError("covariance is not symmetric")
        if np.min(np.linalg.eigvalsh(cov)) <= 0:
            raise ValidationError("covariance is not positive definite")

    @property
    def dimension(self) -> int:
        return self.mean.size


@dataclass(frozen=True)
class NoiseSchedule:
    """Variance-preserving forward process with a linear beta ramp on t in [0, 1].

    alpha(0) = 1 and sigma(0) = 0 exactly; alpha is monotone nonincreasing and
    alpha^2 + sigma^2 = 1 by construction.
    """

    beta_min: float = 0.1
    beta_max: float = 20.0

    def __post_init__(self) -> None:
        if self.beta_min <= 0 or self.beta_max < self.beta_min:
            raise ValidationError("need 0 < beta_min <= beta_max")

    def check_time(self, t: float) -> float:
        if not 0.0 <= t <= 1.0:
            raise ValidationError(f"time {t!r} outside [0, 1]")
        return float(t)

    def beta(self, t: float) -> float:
        return self.beta_min + t * (self.beta_max - self.beta_min)

    def alpha(self, t: float) -> float:
        integral = self.beta_min * t + 0.5 * (self.beta_max - self.beta_min) * t * t
        return math.exp(-0.5 * integral)

    def sigma(self, t: float) -> float:
        a = self.alpha(t)
        return math.sqrt(max(0.0, 1.0 - a * a))


@dataclass(frozen=True)
class PromptMixture:
    """One prompt's conditional world: attribute values, a component per value,
    and the model's biased attribute weights."""

    prompt_id: str
    attributes: tuple[str, ...]
    components: tuple[GaussianComponent, ...]  # aligned with attributes
    bias_weights: ProbabilityVector

    def __post_init__(self) -> None:
        if len(self.attributes) != len(self.components):
            raise ValidationError("one component required per attribute")
        if len(set(self.attributes)) != len(self.attributes):
            raise ValidationError("duplicate attribute in prompt mixture")
        if tuple(self.bias_weights.labels) != self.attributes:
            raise ValidationError("bias weights must cover the attributes in order")
        dims = {c.dimension for c in self.components}
        if len(dims) != 1:
            raise ValidationError("components must share one dimension")

    @property
    def dimension(self) -> int:
        return self.components[0].dimension

    def component(self, attribute: str) -> GaussianComponent:
        return self.components[self.attributes.index(attribute)]


@dataclass(frozen=True)
class MixtureWorld:
    """Ground truth for the simulator: prompts, their mixtures, prompt priors,
    and the shared noise schedule."""

    dimension: int
    prompts: tuple[PromptMixture, ...]
    schedule: NoiseSchedule = field(default_factory=NoiseSchedule)
    prompt_priors: ProbabilityVector | None = None

    def __post_init__(self) -> None:
        if not self.prompts:
            raise ValidationError("world has no prompts")
        for p in self.prompts:
            if p.dimension != self.dimension:
                raise ValidationError(
                    f"prompt {p.prompt_id!r} dimension {p.dimension} != world {self.dimension}"
                )
        ids = tuple(p.prompt_id for p in self.prompts)
        if len(set(ids)) != len(ids):
            raise ValidationError("duplicate prompt ids")
        priors = self.prompt_priors
        if priors is None:
            priors = ProbabilityVector(ids, tuple(1.0 / len(ids) for _ in ids))
            object.__setattr__(self, "prompt_priors", priors)
        elif tuple(priors.labels) != ids:
            raise ValidationError("prompt priors must cover the prompt ids in order")

    def prompt(self, prompt_id: str) -> PromptMixture:
        for p in self.prompts:
            if p.prompt_id == prompt_id:
                return p
        raise KeyError(prompt_id)


@dataclass(frozen=True)
class GuidanceConfig:
    """Which score source drives sampling: exact mixture, k-sample Monte Carlo,
    or ancestral (one attribute drawn per trajectory)."""

    guidance_scale: float = 1.0
    weight_source: str = "exact"  # "exact" | "mc" | "ancestral"
    mc_samples: int = 1
    weights: ProbabilityVector | None = None

    def __post_init__(self) -> None:
        if self.weight_source not in ("exact", "mc", "ancestral"):
            raise ValidationError(f"unknown weight source {self.weight_source!r}")
        if self.weight_source == "mc" and self.mc_samples < 1:
            raise ValidationError("Monte Carlo needs at least 1 sample")


def world_from_dict(data: dict) -> MixtureWorld:
    d = int(data["dimension"])
    sched_data = data.get("schedule", {})
    schedule = NoiseSchedule(
        beta_min=float(sched_data.get("beta_min", 0.1)),
        beta_max=float(sched_data.get("beta_max", 20.0)),
    )
    prompts = []
    for p in data["prompts"]:
        attrs = tuple(p["attributes"])
        comps = tuple(
            GaussianComponent(np.asarray(p["components"][a]["mean"], float),
                              np.asarray(p["components"][a]["cov"], float))
            for a in attrs
        )
        bias = normalize_weights([(a, p["bias_weights"][a]) for a in attrs])
        prompts.append(PromptMixture(p["id"], attrs, comps, bias))
    priors = None
    if "prompt_priors" in data:
        priors = normalize_weights(
            [(p.prompt_id, data["prompt_priors"][p.prompt_id]) for p in prompts]
        )
    return MixtureWorld(d, tuple(prompts), schedule, priors)


def world_to_dict(world: MixtureWorld) -> dict:
    return {
        "dimension": world.dimension,
        "schedule": {
            "beta_min": world.schedule.beta_min,
            "beta_max": world.schedule.beta_max,
        },
        "prompts": [
            {
                "id": p.prompt_id,
                "attributes": list(p.attributes),
                "components": {
                    a: {"mean": c.mean.tolist(), "cov": c.cov.tolist()}
                    for a, c in zip(p.attributes, p.components)
                },
                "bias_weights": p.bias_weights.as_dict(),
            }
            for p in world.prompts
        ],
        "prompt_priors": world.prompt_priors.as_dict(),
    }


def load_world(path: str | Path) -> MixtureWorld:
    return world_from_dict(json.loads(Path(path).read_text("utf-8")))


def save_world(world: MixtureWorld, path: str | Path) -> None:
    Path(path).write_text(json.dumps(world_to_dict(world), indent=2), "utf-8")


def two_component_world(
    separation: float = 3.0,
    bias: tuple[float, float] = (0.9, 0.1),
    prompt_id: str = "p0",
) -> MixtureWorld:
    """Default desk-scale world: d=2, components at (+/-separation, 0), identity
    covariance. Separation >> sigma makes classification near-perfect."""
    attrs = ("a", "b")
    comps = (
        GaussianComponent(np.array([separation, 0.0]), np.eye(2)),
        GaussianComponent(np.array([-separation, 0.0]), np.eye(2)),
    )
    weights = normalize_weights(list(zip(attrs, bias)))
    prompt = PromptMixture(prompt_id, attrs, comps, weights)
    return MixtureWorld(2, (prompt,))


def random_world(
    rng: np.random.Generator,
    n_prompts: int = 1,
    n_components: int = 3,
    dimension: int = 2,
    mean_scale: float = 3.0,
) -> MixtureWorld:
    """Random well-conditioned world for property checks (eigenvalues >= 0.3)."""
    prompts = []
    for pi in range(n_prompts):
        attrs = tuple(f"z{zi}" for zi in range(n_components))
        comps = []
        for _ in range(n_components):
            mean = rng.normal(scale=mean_scale, size=dimension)
            a = rng.normal(size=(dimension, dimension))
            cov = a @ a.T / dimension + 0.3 * np.eye(dimension)
            comps.append(GaussianComponent(mean, cov))
        bias = normalize_weights(list(zip(attrs, rng.dirichlet(np.ones(n_components)))))
        prompts.append(PromptMixture(f"p{pi}", attrs, tuple(comps), bias))
    priors = normalize_weights(
        [(p.prompt_id, w) for p, w in zip(prompts, rng.dirichlet(np.ones(n_prompts)))]
    )
    return MixtureWorld(dimension, tuple(prompts), NoiseSchedule(), priors)
