import csv

import numpy as np
import pytest

from fairguide.core import ProbabilityVector, ValidationError, normalize_weights
from fairguide.sim import (
    GaussianComponent,
    MixtureWorld,
    NoiseSchedule,
    PromptMixture,
    classify,
    sample_ancestral_fair,
    sample_mc,
    sample_reverse,
    true_score,
    two_component_world,
    write_samples_csv,
)

SCHED = NoiseSchedule()


def standard_normal_world():
    comp = GaussianComponent(np.zeros(2), np.eye(2))
    prompt = PromptMixture(
        "p", ("only", "alias"), (comp, comp), normalize_weights([("only", 1), ("alias", 1)])
    )
    return MixtureWorld(2, (prompt,))


class TestSampleReverse:
    def test_standard_normal_moments(self):
        world = standard_normal_world()
        prompt = world.prompts[0]
        fn = lambda X, t: true_score(X, prompt, SCHED, t)
        pts = sample_reverse(fn, 2, 5000, 500, seed=3, sched=SCHED)
        assert np.all(np.abs(pts.mean(axis=0)) < 0.05)
        assert np.all(np.abs(pts.var(axis=0, ddof=1) - 1.0) < 0.1)

    def test_bit_identical_given_seed(self):
        world = standard_normal_world()
        prompt = world.prompts[0]
        fn = lambda X, t: true_score(X, prompt, SCHED, t)
        a = sample_reverse(fn, 2, 50, 50, seed=9, sched=SCHED)
        b = sample_reverse(fn, 2, 50, 50, seed=9, sched=SCHED)
        np.testing.assert_array_equal(a, b)

    def test_more_samples_extend_prefix(self):
        # per-sample streams: the first k samples are the same regardless of n
        world = standard_normal_world()
        prompt = world.prompts[0]
        fn = lambda X, t: true_score(X, prompt, SCHED, t)
        small = sample_reverse(fn, 2, 10, 50, seed=4, sched=SCHED)
        large = sample_reverse(fn, 2, 25, 50, seed=4, sched=SCHED)
        np.testing.assert_array_equal(small, large[:10])

    def test_step_doubling_stability(self):
        # n large enough that binomial noise (~0.011 at 1 sigma) sits inside
        # the 0.02 budget alongside the discretization shift
        world = two_component_world(3.0, (0.5, 0.5))
        prompt = world.prompts[0]
        fn = lambda X, t: true_score(X, prompt, SCHED, t)
        freqs = []
        for steps in (250, 500):
            pts = sample_reverse(fn, 2, 4000, steps, seed=21, sched=SCHED)
            labels = classify(pts, prompt, SCHED)
            freqs.append(labels.count("a") / len(labels))
        assert abs(freqs[0] - freqs[1]) < 0.02

    def test_preconditions(self):
        fn = lambda X, t: -X
        with pytest.raises(ValidationError):
            sample_reverse(fn, 2, 0, 50, 0, SCHED)
        with pytest.raises(ValidationError):
            sample_reverse(fn, 2, 5, 5, 0, SCHED)


class TestAncestralFair:
    def test_degenerate_weights(self):
        world = two_component_world()
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (1.0, 0.0))
        _, drawn = sample_ancestral_fair(prompt, weights, 200, 20, seed=5, sched=SCHED)
        assert set(drawn) == {"a"}

    def test_recovered_frequencies(self):
        world = two_component_world(3.0, (0.9, 0.1))
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.5, 0.5))
        pts, _ = sample_ancestral_fair(prompt, weights, 2000, 100, seed=6, sched=SCHED)
        labels = classify(pts, prompt, SCHED)
        freq = labels.count("a") / len(labels)
        assert abs(freq - 0.5) < 0.035  # 3 sigma ~ 0.034 at n=2000

    def test_drawn_frequency_binomial_bound(self):
        world = two_component_world()
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.3, 0.7))
        n = 4000
        _, drawn = sample_ancestral_fair(prompt, weights, n, 10, seed=7, sched=SCHED)
        for attr, p in zip(prompt.attributes, weights.values):
            bound = 3 * np.sqrt(p * (1 - p) / n)
            assert abs(drawn.count(attr) / n - p) < bound

    def test_deterministic(self):
        world = two_component_world()
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.4, 0.6))
        a_pts, a_drawn = sample_ancestral_fair(prompt, weights, 64, 20, seed=8, sched=SCHED)
        b_pts, b_drawn = sample_ancestral_fair(prompt, weights, 64, 20, seed=8, sched=SCHED)
        np.testing.assert_array_equal(a_pts, b_pts)
        assert a_drawn == b_drawn


class TestMonteCarloSampler:
    def test_single_draw_matches_target_family(self):
        # k-sample MC with k=1 follows one component per step; with symmetric
        # equal-weight components the sample mean stays near the origin
        world = two_component_world(2.0, (0.5, 0.5))
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.5, 0.5))
        pts = sample_mc(prompt, weights, k=2, n=400, steps=60, seed=10, sched=SCHED)
        assert abs(pts.mean(axis=0)[0]) < 0.5

    def test_deterministic(self):
        world = two_component_world()
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.5, 0.5))
        a = sample_mc(prompt, weights, 2, 32, 20, seed=2, sched=SCHED)
        b = sample_mc(prompt, weights, 2, 32, 20, seed=2, sched=SCHED)
        np.testing.assert_array_equal(a, b)

    def test_k_validation(self):
        world = two_component_world()
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.5, 0.5))
        with pytest.raises(ValidationError):
            sample_mc(prompt, weights, 0, 8, 20, 0, SCHED)


class TestClassify:
    def test_component_mean(self):
        world = two_component_world(5.0)
        prompt = world.prompts[0]
        assert classify(np.array([5.0, 0.0]), prompt, SCHED) == "a"
        assert classify(np.array([-5.0, 0.0]), prompt, SCHED) == "b"

    def test_midpoint_tie_break(self):
        # equal priors, identical covariances: the exact midpoint ties and the
        # first catalog attribute wins
        world = two_component_world(3.0, (0.5, 0.5))
        prompt = world.prompts[0]
        assert classify(np.array([0.0, 0.0]), prompt, SCHED) == "a"

    def test_accuracy_on_separated_world(self):
        world = two_component_world(5.0, (0.5, 0.5))  # 10 sigma between means
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.5, 0.5))
        pts, drawn = sample_ancestral_fair(prompt, weights, 1000, 100, seed=3, sched=SCHED)
        got = classify(pts, prompt, SCHED)
        accuracy = sum(g == d for g, d in zip(got, drawn)) / len(drawn)
        assert accuracy >= 0.99


class TestCsvOutput:
    def test_round_trip(self, tmp_path):
        world = two_component_world()
        prompt = world.prompts[0]
        weights = ProbabilityVector(prompt.attributes, (0.5, 0.5))
        pts, drawn = sample_ancestral_fair(prompt, weights, 10, 20, seed=1, sched=SCHED)
        labels = classify(pts, prompt, SCHED)
        out = tmp_path / "samples.csv"
        write_samples_csv(out, pts, drawn, labels, seed=1)
        with out.open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 10
        assert rows[0]["drawn"] in ("a", "b")
        assert float(rows[3]["x0"]) == pts[3, 0]
        assert all(r["seed"] == "1" for r in rows)
