"""Closed-form scores for noised Gaussian mixtures.

All functions accept a single point (d,) or a batch (n, d) and return
matching shapes. Posterior computations go through log densities with
log-sum-exp; raw densities underflow for separated components at small t.
"""

from __future__ import annotations

import math

import numpy as np

from ..core import ProbabilityVector, ValidationError
from .world import GaussianComponent, MixtureWorld, NoiseSchedule, PromptMixture

_LOG_2PI = math.log(2.0 * math.pi)


def _as_batch(x) -> tuple[np.ndarray, bool]:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        return x[None, :], True
    return x, False


def marginal_params(
    comp: GaussianComponent, sched: NoiseSchedule, t: float
) -> tuple[np.ndarray, np.ndarray]:
    """Noised marginal of one component: mean alpha_t*mu, cov alpha_t^2*Sigma + sigma_t^2*I."""
    t = sched.check_time(t)
    a = sched.alpha(t)
    s2 = 1.0 - a * a
    return a * comp.mean, (a * a) * comp.cov + s2 * np.eye(comp.dimension)


def marginal_component(
    comp: GaussianComponent, sched: NoiseSchedule, t: float
) -> GaussianComponent:
    mu_t, cov_t = marginal_params(comp, sched, t)
    return GaussianComponent(mu_t, cov_t)


def component_score(x, comp: GaussianComponent, sched: NoiseSchedule, t: float):
    """Gradient of the log marginal density: -Sigma_t^{-1} (x - mu_t)."""
    X, single = _as_batch(x)
    mu_t, cov_t = marginal_params(comp, sched, t)
    if X.shape[1] != mu_t.size:
        raise ValidationError("point dimension does not match component")
    scores = -np.linalg.solve(cov_t, (X - mu_t).T).T
    return scores[0] if single else scores


def log_component_density(x, comp: GaussianComponent, sched: NoiseSchedule, t: float):
    X, single = _as_batch(x)
    mu_t, cov_t = marginal_params(comp, sched, t)
    diff = X - mu_t
    solved = np.linalg.solve(cov_t, diff.T).T
    quad = np.einsum("nd,nd->n", diff, solved)
    _, logdet = np.linalg.slogdet(cov_t)
    out = -0.5 * (quad + logdet + mu_t.size * _LOG_2PI)
    return float(out[0]) if single else out


def _stacked(prompt: PromptMixture, sched: NoiseSchedule, t: float, X: np.ndarray):
    """Per-component scores (n_z, n, d) and log densities (n, n_z) at time t."""
    n_z = len(prompt.attributes)
    scores = np.empty((n_z, X.shape[0], X.shape[1]))
    logdens = np.empty((X.shape[0], n_z))
    for zi, comp in enumerate(prompt.components):
        mu_t, cov_t = marginal_params(comp, sched, t)
        diff = X - mu_t
        solved = np.linalg.solve(cov_t, diff.T).T
        scores[zi] = -solved
        _, logdet = np.linalg.slogdet(cov_t)
        quad = np.einsum("nd,nd->n", diff, solved)
        logdens[:, zi] = -0.5 * (quad + logdet + mu_t.size * _LOG_2PI)
    return scores, logdens


def _softmax(logw: np.ndarray) -> np.ndarray:
    m = logw.max(axis=-1, keepdims=True)
    e = np.exp(logw - m)
    return e / e.sum(axis=-1, keepdims=True)


def _ordered_weight_values(prompt: PromptMixture, weights: ProbabilityVector) -> np.ndarray:
    if set(weights.labels) != set(prompt.attributes):
        raise ValidationError(
            f"weights cover {sorted(weights.labels)}, prompt has {sorted(prompt.attributes)}"
        )
    by_label = weights.as_dict()
    return np.array([by_label[a] for a in prompt.attributes])


def mixture_score(
    x, prompt: PromptMixture, weights: ProbabilityVector, sched: NoiseSchedule, t: float
):
    """Weighted sum of per-component scores under the supplied attribute weights.

    This is the guidance decomposition: substituting different weights steers
    the effective score. Linear in the weights by construction.
    """
    X, single = _as_batch(x)
    w = _ordered_weight_values(prompt, weights)
    scores, _ = _stacked(prompt, sched, t, X)
    out = np.einsum("z,znd->nd", w, scores)
    return out[0] if single else out


def posterior_weights(
    x, prompt: PromptMixture, sched: NoiseSchedule, t: float
) -> ProbabilityVector:
    """Attribute posterior p(z | x, t): bias prior times noised component density,
    normalized in log space."""
    X, single = _as_batch(x)
    if not single:
        raise ValidationError("posterior_weights takes a single point")
    _, logdens = _stacked(prompt, sched, t, X)
    logw = logdens[0] + np.log(np.asarray(prompt.bias_weights.values))
    post = _softmax(logw)
    post = post / post.sum()
    return ProbabilityVector(prompt.attributes, tuple(float(v) for v in post))


def posterior_matrix(x, prompt: PromptMixture, sched: NoiseSchedule, t: float) -> np.ndarray:
    """Batch posterior responsibilities, shape (n, n_z)."""
    X, _ = _as_batch(x)
    _, logdens = _stacked(prompt, sched, t, X)
    return _softmax(logdens + np.log(np.asarray(prompt.bias_weights.values)))


def true_score(x, prompt: PromptMixture, sched: NoiseSchedule, t: float):
    """Exact score of the full conditional mixture via responsibility weighting."""
    X, single = _as_batch(x)
    scores, logdens = _stacked(prompt, sched, t, X)
    resp = _softmax(logdens + np.log(np.asarray(prompt.bias_weights.values)))
    out = np.einsum("nz,znd->nd", resp, scores)
    return out[0] if single else out


def log_mixture_density(x, prompt: PromptMixture, sched: NoiseSchedule, t: float):
    """log p(x | prompt, t) = logsumexp_z [log bias_z + log N_z(x)]."""
    X, single = _as_batch(x)
    _, logdens = _stacked(prompt, sched, t, X)
    logw = logdens + np.log(np.asarray(prompt.bias_weights.values))
    m = logw.max(axis=1)
    out = m + np.log(np.exp(logw - m[:, None]).sum(axis=1))
    return float(out[0]) if single else out


def unconditional_score(x, world: MixtureWorld, sched: NoiseSchedule, t: float):
    """Score of the prompt-prior-and-bias-weighted mixture over every component."""
    X, single = _as_batch(x)
    all_scores, all_logw = _unconditional_parts(X, world, sched, t)
    resp = _softmax(all_logw)
    out = np.einsum("nz,znd->nd", resp, all_scores)
    return out[0] if single else out


def log_unconditional_density(x, world: MixtureWorld, sched: NoiseSchedule, t: float):
    X, single = _as_batch(x)
    _, all_logw = _unconditional_parts(X, world, sched, t)
    m = all_logw.max(axis=1)
    out = m + np.log(np.exp(all_logw - m[:, None]).sum(axis=1))
    return float(out[0]) if single else out


def _unconditional_parts(X, world: MixtureWorld, sched: NoiseSchedule, t: float):
    blocks_scores = []
    blocks_logw = []
    priors = world.prompt_priors.as_dict()
    for prompt in world.prompts:
        scores, logdens = _stacked(prompt, sched, t, X)
        logw = (
            logdens
            + np.log(np.asarray(prompt.bias_weights.values))
            + math.log(priors[prompt.prompt_id])
        )
        blocks_scores.append(scores)
        blocks_logw.append(logw)
    return np.concatenate(blocks_scores, axis=0), np.concatenate(blocks_logw, axis=1)


def prop1_residual(
    x, prompt: PromptMixture, weights: ProbabilityVector, sched: NoiseSchedule, t: float
) -> float:
    """L2 gap between the exact score and the weight-mixed score at one point.

    Zero exactly when mixing weights equal the posterior (or all components
    coincide); strictly positive otherwise, quantifying how load-bearing the
    conditional-independence assumption is.
    """
    ts = true_score(x, prompt, sched, t)
    ms = mixture_score(x, prompt, weights, sched, t)
    return float(np.linalg.norm(ts - ms))


def cfg_score(
    x,
    world: MixtureWorld,
    prompt: PromptMixture,
    guidance_scale: float,
    sched: NoiseSchedule,
    t: float,
):
    """Classifier-free-guidance combination: (1-w)*unconditional + w*conditional."""
    uncond = unconditional_score(x, world, sched, t)
    cond = true_score(x, prompt, sched, t)
    return (1.0 - guidance_scale) * uncond + guidance_scale * cond
