"""Executable acceptance checks with pinned tolerances.

Each check returns a CheckResult; the CLI `verify`/`simulate` commands and
the test suite both run these, so every release gate is reproducible from
the command line with no credentials.
"""

from __future__ import annotations

import hashlib
import json
import math
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .core import ProbabilityVector, PromptText, AttributeCatalog
from .evalstats import (
    EmbeddingSet,
    bootstrap_sp_test,
    frechet_distance,
    mann_whitney_one_sided,
    statistical_parity,
    trace_diversity,
)
from .genbackend import MockImageBackend, generate_batch, manifest_canonical_bytes
from .llm.client import DetectionParseError, build_detection_request, build_fusion_request, parse_detection
from .llm.templates import (
    DETECTION_EXAMPLE_JSON,
    DETECTION_TEMPLATE,
    FUSION_TEMPLATE,
)
from .report import evaluate_run
from .resample import TargetSpec, bundled_statistics_table, entigen_transform
from .sim.sampling import classify, sample_ancestral_fair
from .sim.scores import (
    cfg_score,
    component_score,
    log_component_density,
    log_mixture_density,
    log_unconditional_density,
    posterior_weights,
    prop1_residual,
    true_score,
    unconditional_score,
)
from .sim.world import NoiseSchedule, random_world, two_component_world

# Any drift in the shipped prompt templates must fail the golden check.
DETECTION_TEMPLATE_SHA256 = "09cb60a210d510b768437e5758c19c0a637feeb52228746159e02825e6a6a470"
FUSION_TEMPLATE_SHA256 = "e49c253d3085672723b6207a1c1e63e7ea7bd21e0e809ce754aa06765087f653"


@dataclass
class CheckResult:
    criterion: int
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"[{status}] criterion {self.criterion}: {self.name} -- {self.detail}"


def check_posterior_identity(seed: int = 7) -> CheckResult:
    """Criterion 1: exact-score identity over 1000 random (world, x, t) triples."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(1000):
        d = int(rng.integers(1, 4))
        world = random_world(
            rng, n_prompts=1, n_components=int(rng.integers(2, 5)), dimension=d
        )
        prompt = world.prompts[0]
        sched = world.schedule
        x = rng.normal(scale=2.5, size=d)
        t = float(rng.uniform(0.0, 1.0))
        post = posterior_weights(x, prompt, sched, t)
        mixed = sum(
            w * component_score(x, prompt.component(a), sched, t)
            for a, w in zip(post.labels, post.values)
        )
        ts = true_score(x, prompt, sched, t)
        worst = max(worst, float(np.linalg.norm(ts - mixed)))
    return CheckResult(
        1, "posterior-weighted score identity", worst < 1e-10,
        f"max residual {worst:.3e} (< 1e-10)",
    )


def check_independence_residual() -> CheckResult:
    """Criterion 2: residual vanishes for identical components, not for separated ones."""
    from .core import normalize_weights
    from .sim.world import GaussianComponent, MixtureWorld, PromptMixture

    comp = GaussianComponent(np.array([1.0, -0.5]), np.array([[1.2, 0.3], [0.3, 0.8]]))
    same = PromptMixture(
        "same", ("a", "b"), (comp, comp), normalize_weights([("a", 0.6), ("b", 0.4)])
    )
    world_same = MixtureWorld(2, (same,))
    sched = world_same.schedule

    probes = [np.array(p) for p in [(0.0, 0.0), (1.0, 2.0), (-2.0, 0.5), (3.0, -1.0)]]
    times = (0.0, 0.1, 0.5, 0.9)
    worst_same = max(
        prop1_residual(x, same, same.bias_weights, sched, t)
        for x in probes
        for t in times
    )

    sep = two_component_world(3.0, (0.9, 0.1))
    prompt = sep.prompts[0]
    best_sep = max(
        prop1_residual(x, prompt, prompt.bias_weights, sep.schedule, t)
        for x in probes
        for t in (0.1, 0.3, 0.5)
    )
    ok = worst_same < 1e-10 and best_sep > 1e-3
    return CheckResult(
        2, "conditional-independence residual", ok,
        f"identical-components max {worst_same:.3e} (< 1e-10); "
        f"separated max {best_sep:.3e} (> 1e-3)",
    )


def check_cfg_identity(seed: int = 11) -> CheckResult:
    """Criterion 3: guidance scale 1 reproduces the conditional score, 0 the unconditional."""
    rng = np.random.default_rng(seed)
    world = random_world(rng, n_prompts=2, n_components=3, dimension=2)
    prompt = world.prompts[0]
    sched = world.schedule
    X = rng.normal(scale=3.0, size=(1000, 2))
    worst = 0.0
    for t in (0.05, 0.4, 0.9):
        cond = true_score(X, prompt, sched, t)
        uncond = unconditional_score(X, world, sched, t)
        d1 = np.linalg.norm(cfg_score(X, world, prompt, 1.0, sched, t) - cond, axis=1)
        d0 = np.linalg.norm(cfg_score(X, world, prompt, 0.0, sched, t) - uncond, axis=1)
        worst = max(worst, float(d1.max()), float(d0.max()))
    return CheckResult(
        3, "guidance-scale identities", worst < 1e-12, f"max deviation {worst:.3e} (< 1e-12)"
    )


def _central_diff(fn: Callable[[np.ndarray], float], x: np.ndarray, h: float = 1e-5):
    g = np.zeros_like(x, dtype=float)
    for i in range(x.size):
        e = np.zeros_like(x, dtype=float)
        e[i] = h
        g[i] = (fn(x + e) - fn(x - e)) / (2.0 * h)
    return g


def check_finite_difference(seed: int = 13) -> CheckResult:
    """Criterion 4: analytic scores match central differences of the log densities."""
    rng = np.random.default_rng(seed)
    worlds = [
        two_component_world(3.0, (0.9, 0.1)),
        random_world(rng, n_prompts=2, n_components=3, dimension=2),
        random_world(rng, n_prompts=1, n_components=4, dimension=3),
    ]
    worst = 0.0
    checked = 0
    for world in worlds:
        sched = world.schedule
        prompt = world.prompts[0]
        for t in (0.05, 0.3, 0.7, 1.0):
            for _ in range(5):
                x = rng.normal(scale=2.5, size=world.dimension)
                pairs = [
                    (
                        component_score(x, prompt.components[0], sched, t),
                        _central_diff(
                            lambda p: log_component_density(p, prompt.components[0], sched, t), x
                        ),
                    ),
                    (
                        true_score(x, prompt, sched, t),
                        _central_diff(lambda p: log_mixture_density(p, prompt, sched, t), x),
                    ),
                    (
                        unconditional_score(x, world, sched, t),
                        _central_diff(lambda p: log_unconditional_density(p, world, sched, t), x),
                    ),
                ]
                for analytic, fd in pairs:
                    scale = float(np.linalg.norm(fd))
                    if scale < 0.05:
                        continue  # near a mode: relative error is ill-posed
                    checked += 1
                    worst = max(worst, float(np.linalg.norm(analytic - fd)) / scale)
    return CheckResult(
        4, "finite-difference agreement", worst < 1e-5,
        f"max relative error {worst:.3e} over {checked} probes (< 1e-5)",
    )


def check_fairness_steering(seed: int = 20240, n: int = 2000, steps: int = 500) -> CheckResult:
    """Criterion 5: resampled weights (0.5, 0.5) defeat the (0.9, 0.1) bias."""
    world = two_component_world(3.0, (0.9, 0.1))
    prompt = world.prompts[0]
    sched = world.schedule
    fair = ProbabilityVector(prompt.attributes, (0.5, 0.5))

    fair_pts, _ = sample_ancestral_fair(prompt, fair, n, steps, seed, sched)
    bias_pts, _ = sample_ancestral_fair(prompt, prompt.bias_weights, n, steps, seed + 1, sched)

    def emp(points) -> ProbabilityVector:
        labels = classify(points, prompt, sched)
        counts = [labels.count(a) / len(labels) for a in prompt.attributes]
        return ProbabilityVector(prompt.attributes, tuple(counts))

    sp_fair = statistical_parity(emp(fair_pts), fair)
    sp_bias = statistical_parity(emp(bias_pts), fair)
    ok = sp_fair < 0.05 and sp_bias > 0.45
    return CheckResult(
        5, "fairness steering", ok,
        f"SP(fair)={sp_fair:.4f} (< 0.05), SP(biased)={sp_bias:.4f} (> 0.45) at n={n}",
    )


def check_parity_oracle(seed: int = 31) -> CheckResult:
    """Criterion 6: parity value oracle, metric axioms, sqrt(2) upper bound."""
    pv = lambda vals: ProbabilityVector(tuple(f"l{i}" for i in range(len(vals))), tuple(vals))
    ceo = statistical_parity(pv([0.5, 0.5]), pv([0.33, 0.67]))
    ok = abs(ceo - 0.24042) <= 1e-4
    detail = [f"SP(uniform, 0.33/0.67)={ceo:.5f}"]

    rng = np.random.default_rng(seed)
    bound = math.sqrt(2.0)
    for _ in range(10_000):
        k = int(rng.integers(2, 7))
        p, q, r = (pv(rng.dirichlet(np.ones(k))) for _ in range(3))
        spq, sqp = statistical_parity(p, q), statistical_parity(q, p)
        if abs(spq - sqp) > 1e-15:
            ok = False
            detail.append("symmetry violated")
            break
        if statistical_parity(p, p) != 0.0:
            ok = False
            detail.append("identity violated")
            break
        if statistical_parity(p, r) > spq + statistical_parity(q, r) + 1e-12:
            ok = False
            detail.append("triangle inequality violated")
            break
        if spq > bound + 1e-12:
            ok = False
            detail.append("sqrt(2) bound violated")
            break
    else:
        detail.append("axioms hold on 10^4 random pairs; SP <= sqrt(2)")
    return CheckResult(6, "statistical parity oracle", ok, "; ".join(detail))


def check_bootstrap(seed: int = 0) -> CheckResult:
    """Criterion 7: one-sided bootstrap endpoints."""
    target = ProbabilityVector(("male", "female"), (0.5, 0.5))
    skew = bootstrap_sp_test(["male"] * 100, ["male"] * 50 + ["female"] * 50, target, 1000, seed)
    same = ["male"] * 60 + ["female"] * 40
    sym = bootstrap_sp_test(same, same, target, 1000, seed)
    ok = skew.p_value == 0.0 and 0.3 <= sym.p_value <= 0.7
    return CheckResult(
        7, "bootstrap parity test", ok,
        f"skewed-vs-balanced p={skew.p_value:.3f} (= 0.000); "
        f"identical-input p={sym.p_value:.3f} (in [0.3, 0.7])",
    )


def check_mann_whitney() -> CheckResult:
    """Criterion 8: exact tail value and exact/approximation agreement at n=6/6."""
    import itertools

    exact = mann_whitney_one_sided([3, 4], [1, 2])
    ok = exact.p_value == 1 / 6 and exact.method == "exact_enumeration"
    worst = 0.0
    values = list(range(1, 13))
    for positions in itertools.combinations(range(12), 6):
        xs = [float(values[i]) for i in positions]
        ys = [float(values[i]) for i in range(12) if i not in positions]
        pe = mann_whitney_one_sided(xs, ys, method="exact").p_value
        pa = mann_whitney_one_sided(xs, ys, method="normal").p_value
        worst = max(worst, abs(pe - pa))
    ok = ok and worst <= 0.02
    return CheckResult(
        8, "rank test dual route", ok,
        f"p([3,4],[1,2])={exact.p_value:.6f} (=1/6); "
        f"max |exact-approx| {worst:.4f} over all n=6/6 inputs (<= 0.02)",
    )


def check_trace(seed: int = 41) -> CheckResult:
    """Criterion 9: degenerate traces and rotation invariance."""
    rng = np.random.default_rng(seed)
    same = EmbeddingSet(np.tile(rng.normal(size=6), (10, 1)))
    zero = trace_diversity(same)
    two = trace_diversity(EmbeddingSet(np.array([[0.0, 0.0], [2.0, 0.0]])))
    X = rng.normal(size=(50, 8))
    q, _ = np.linalg.qr(rng.normal(size=(8, 8)))
    rot_gap = abs(trace_diversity(EmbeddingSet(X @ q)) - trace_diversity(EmbeddingSet(X)))
    ok = abs(zero) <= 1e-12 and abs(two - 2.0) <= 1e-12 and rot_gap <= 1e-9
    return CheckResult(
        9, "trace diversity", ok,
        f"identical rows {zero:.1e}; two-point {two:.12f} (=2.0); rotation gap {rot_gap:.1e}",
    )


def check_frechet(seed: int = 43) -> CheckResult:
    """Criterion 10: zero on identity, closed-form mean shift, and sampled vs
    analytic moments within 5%."""
    rng = np.random.default_rng(seed)
    a = EmbeddingSet(rng.normal(size=(200, 2)))
    zero = frechet_distance(a, a)
    b = EmbeddingSet(a.matrix + np.array([3.0, 4.0]))
    shift = frechet_distance(a, b)

    mu2 = np.array([1.0, 0.5])
    var2 = np.array([2.0, 0.5])
    xs = EmbeddingSet(rng.normal(size=(5000, 2)))
    ys = EmbeddingSet(mu2 + rng.normal(size=(5000, 2)) * np.sqrt(var2))
    emp = frechet_distance(xs, ys)
    # diagonal-covariance closed form: ||mu||^2 + sum(1 + v - 2 sqrt(v))
    analytic = float(mu2 @ mu2 + np.sum(1.0 + var2 - 2.0 * np.sqrt(var2)))
    rel = abs(emp - analytic) / analytic
    ok = zero < 1e-8 and abs(shift - 25.0) <= 1e-6 and rel <= 0.05
    return CheckResult(
        10, "frechet distance", ok,
        f"identical {zero:.1e} (< 1e-8); mean shift {shift:.8f} (=25); "
        f"sampled vs analytic rel err {rel:.3f} (<= 0.05)",
    )


def check_detection_goldens() -> CheckResult:
    """Criterion 11: template bytes pinned; example parses; scalar value rejected."""
    det_hash = hashlib.sha256(DETECTION_TEMPLATE.encode()).hexdigest()
    fus_hash = hashlib.sha256(FUSION_TEMPLATE.encode()).hexdigest()
    problems = []
    if det_hash != DETECTION_TEMPLATE_SHA256:
        problems.append(f"detection template hash drifted: {det_hash}")
    if fus_hash != FUSION_TEMPLATE_SHA256:
        problems.append(f"fusion template hash drifted: {fus_hash}")

    msgs = build_detection_request(PromptText("a firefighter"))
    if msgs[0].content != DETECTION_TEMPLATE or msgs[1].content != "a firefighter":
        problems.append("detection request does not reproduce the template verbatim")
    fmsgs = build_fusion_request(
        PromptText("A portrait of a person reading a book"),
        _example_assignment(),
    )
    if fmsgs[0].content != FUSION_TEMPLATE:
        problems.append("fusion request does not reproduce the template verbatim")

    catalog = parse_detection(DETECTION_EXAMPLE_JSON)
    sizes = {cat: len(attrs) for cat, attrs in catalog.entries}
    if sizes != {"gender": 3, "age": 3, "race": 4}:
        problems.append(f"example catalog wrong shape: {sizes}")
    try:
        parse_detection('{"race": "Asian"}')
        problems.append("scalar attribute value was not rejected")
    except DetectionParseError:
        pass
    return CheckResult(
        11, "detection goldens", not problems,
        "; ".join(problems) or "templates pinned, example parses to 3/3/4, scalar rejected",
    )


def _example_assignment():
    from .core import AttributeAssignment

    return AttributeAssignment((("gender", "female"), ("age", "elderly")))


ENTIGEN_EXPECTED = {
    "CEO": "A headshot of a CEO, if all individuals can be CEO irrespective of their gender and race",
    "doctor": "A headshot of a doctor, if all individuals can be doctor irrespective of their gender and race",
    "computer programmer": "A headshot of a computer programmer, if all individuals can be computer programmer irrespective of their gender and race",
    "nurse": "A headshot of a nurse, if all individuals can be nurse irrespective of their gender and race",
    "housekeeper": "A headshot of a housekeeper, if all individuals can be housekeeper irrespective of their gender and race",
}


def check_entigen() -> CheckResult:
    """Criterion 12: suffix transform byte-matches for five professions."""
    bad = []
    for prof, expected in ENTIGEN_EXPECTED.items():
        got = entigen_transform(PromptText(f"A headshot of a {prof}"), prof).text
        if got != expected:
            bad.append(prof)
    return CheckResult(
        12, "ethical-suffix transform", not bad,
        "5/5 professions byte-match" if not bad else f"mismatch for {bad}",
    )


_PIPELINE_CATALOG = AttributeCatalog.from_dict(
    {
        "gender": ["male", "female", "non-binary"],
        "age": ["young adult", "middle-aged", "elderly"],
    }
)


def check_pipeline_uniform(seed: int = 404, n: int = 1000) -> CheckResult:
    """Criterion 13: uniform pipeline parity, cached rerun, cross-machine bytes."""
    y = PromptText("a firefighter")
    spec = TargetSpec.uniform()
    problems = []
    with tempfile.TemporaryDirectory() as tmp:
        dir_a = Path(tmp) / "machine-a"
        dir_b = Path(tmp) / "machine-b"
        backend = MockImageBackend()
        manifest = generate_batch(y, _PIPELINE_CATALOG, spec, n, seed, backend, dir_a)
        report = evaluate_run(manifest, spec)
        for cat in report.categories:
            if cat.sp >= 0.07:
                problems.append(f"{cat.category} SP {cat.sp:.4f} >= 0.07")

        rerun_backend = MockImageBackend()
        rerun = generate_batch(y, _PIPELINE_CATALOG, spec, n, seed, rerun_backend, dir_a)
        if rerun.newly_generated != 0 or rerun_backend.calls != 0:
            problems.append(
                f"rerun regenerated {rerun.newly_generated} entries "
                f"({rerun_backend.calls} backend calls)"
            )

        generate_batch(y, _PIPELINE_CATALOG, spec, n, seed, MockImageBackend(), dir_b)
        run_id = manifest.run_id
        if manifest_canonical_bytes(dir_a / run_id) != manifest_canonical_bytes(dir_b / run_id):
            problems.append("manifests differ across independent runs")
        sp_max = max(c.sp for c in report.categories)
    return CheckResult(
        13, "uniform mock pipeline", not problems,
        "; ".join(problems) or f"max SP {sp_max:.4f} (< 0.07); rerun cached; runs byte-identical",
    )


def check_pipeline_stats(seed: int = 505, n: int = 1000) -> CheckResult:
    """Criterion 14: statistics-table pipeline records and hits the CEO gender weights."""
    catalog = AttributeCatalog.from_dict(
        {"gender": ["female", "male"], "race": ["White", "Black", "Asian", "Hispanic"]}
    )
    y = PromptText("A headshot of a CEO")
    spec = TargetSpec.statistics(bundled_statistics_table(), "CEO")
    problems = []
    with tempfile.TemporaryDirectory() as tmp:
        manifest = generate_batch(
            y, catalog, spec, n, seed, MockImageBackend(), Path(tmp)
        )
        recorded = manifest.config["target"]["weights"]["gender"]
        if abs(recorded["female"] - 0.33) > 1e-12 or abs(recorded["male"] - 0.67) > 1e-12:
            problems.append(f"recorded gender weights {recorded} != (0.33, 0.67)")
        freqs = {
            g: sum(1 for e in manifest.entries if e.assignment.as_dict()["gender"] == g) / n
            for g in ("female", "male")
        }
        if abs(freqs["female"] - 0.33) > 0.045 or abs(freqs["male"] - 0.67) > 0.045:
            problems.append(f"assignment frequencies {freqs} off target by > 0.045")
    return CheckResult(
        14, "statistics-table pipeline", not problems,
        "; ".join(problems)
        or f"weights recorded (0.33, 0.67); frequencies {freqs} within 0.045",
    )


SIM_CHECKS = {
    "prop1": (check_posterior_identity, check_independence_residual),
    "cfg": (check_cfg_identity,),
    "fd": (check_finite_difference,),
    "fairness": (check_fairness_steering,),
}

STATS_CHECKS = (
    check_parity_oracle,
    check_bootstrap,
    check_mann_whitney,
    check_trace,
    check_frechet,
)

PIPELINE_CHECKS = (
    check_detection_goldens,
    check_entigen,
    check_pipeline_uniform,
    check_pipeline_stats,
)


def run_sim_checks(which: str = "all") -> list[CheckResult]:
    if which == "all":
        names = ("prop1", "cfg", "fd", "fairness")
    elif which in SIM_CHECKS:
        names = (which,)
    else:
        raise ValueError(f"unknown simulator check {which!r}")
    return [fn() for name in names for fn in SIM_CHECKS[name]]


def run_all_checks() -> list[CheckResult]:
    results = run_sim_checks("all")
    results += [fn() for fn in STATS_CHECKS]
    results += [fn() for fn in PIPELINE_CHECKS]
    return results
