"""Command-line entry points for the detect / generate / evaluate / simulate pipeline.

Exit codes: 0 success, 1 generic failure, 2 detection failed, 3 missing
credentials or configuration, 4 partial generation run.
"""

from __future__ import annotations

import json
import os
import sys
import time
from pathlib import Path

import click

from .core import AttributeCatalog, PromptText, ValidationError, ensure_valid_catalog
from .evalstats import LabelFile, bootstrap_sp_test
from .genbackend import (
    BatchError,
    GenerationManifest,
    HttpImageBackend,
    MockImageBackend,
    generate_batch,
)
from .llm import (
    API_KEY_ENV,
    BASE_URL_ENV,
    DetectionFailedError,
    HttpChatProvider,
    MockChatProvider,
    ResponseCache,
    detect_biases,
    detection_config,
    fuse_prompt,
    fusion_config,
)
from .llm.templates import DETECTION_EXAMPLE_JSON
from .report import evaluate_run
from .resample import (
    StatisticsTable,
    TargetSpec,
    bundled_statistics_table,
    subset_catalog,
)

BACKEND_URL_ENV = "FAIRGUIDE_BACKEND_URL"


def _fail(message: str, code: int) -> None:
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _file_cfg(ctx_obj, *keys, default=None):
    """Read a nested key from the loaded --config document."""
    cur = ctx_obj or {}
    for key in keys:
        if not isinstance(cur, dict) or key not in cur:
            return default
        cur = cur[key]
    return cur


def _resolve(flag_value, env_var: str | None, file_value, default):
    """Precedence: CLI flag, then environment, then config file, then default."""
    if flag_value is not None:
        return flag_value
    if env_var and os.environ.get(env_var):
        return os.environ[env_var]
    if file_value is not None:
        return file_value
    return default


def _make_detection_provider(ctx_obj, mock: bool, mock_script: str | None,
                             model: str | None, base_url: str | None):
    if mock:
        script = Path(mock_script).read_text("utf-8") if mock_script else DETECTION_EXAMPLE_JSON
        return MockChatProvider([script])
    overrides = {}
    model = _resolve(model, None, _file_cfg(ctx_obj, "llm", "model"), None)
    base_url = _resolve(
        base_url, BASE_URL_ENV, _file_cfg(ctx_obj, "llm", "base_url"), None
    )
    if model:
        overrides["model"] = model
    if base_url:
        overrides["base_url"] = base_url
    cfg = detection_config(**overrides)
    if not os.environ.get(cfg.api_key_env):
        _fail(f"no API key found; set {API_KEY_ENV} or pass --mock", 3)
    try:
        return HttpChatProvider(cfg)
    except ValidationError as exc:
        _fail(str(exc), 3)


def parse_target(value: str) -> TargetSpec:
    """uniform | stats:FILE:OCCUPATION | stats:OCCUPATION (bundled) | custom:FILE"""
    if value == "uniform":
        return TargetSpec.uniform()
    if value.startswith("stats:"):
        parts = value.split(":")
        if len(parts) == 2:
            return TargetSpec.statistics(bundled_statistics_table(), parts[1])
        if len(parts) == 3:
            return TargetSpec.statistics(StatisticsTable.from_file(parts[1]), parts[2])
        raise ValidationError(f"bad stats target {value!r}")
    if value.startswith("custom:"):
        from .core import AttributeDistribution

        data = json.loads(Path(value.split(":", 1)[1]).read_text("utf-8"))
        return TargetSpec.custom_spec(AttributeDistribution.from_dict(data))
    raise ValidationError(f"unknown target {value!r}")


@click.group()
@click.option("--config", "config_path", type=click.Path(exists=True), default=None,
              help="JSON config file; environment variables override file values, "
                   "flags override both.")
@click.pass_context
def main(ctx, config_path) -> None:
    """Bias-aware generation toolkit: detect attributes, resample, generate, evaluate."""
    ctx.obj = json.loads(Path(config_path).read_text("utf-8")) if config_path else {}


@main.command()
@click.argument("prompt")
@click.option("--mock", is_flag=True, help="Use the scripted mock provider.")
@click.option("--mock-script", type=click.Path(exists=True), default=None,
              help="File whose text the mock provider returns.")
@click.option("--model", default=None, help="Override the detection model id.")
@click.option("--base-url", default=None, help="Override the provider base URL.")
@click.option("--cache", "cache_path", type=click.Path(), default=None,
              help="JSON-lines detection cache file.")
@click.pass_context
def detect(ctx, prompt, mock, mock_script, model, base_url, cache_path):
    """Detect bias-prone categories for PROMPT and print the catalog JSON."""
    provider = _make_detection_provider(ctx.obj, mock, mock_script, model, base_url)
    cache = ResponseCache(cache_path) if cache_path else None
    try:
        result = detect_biases(PromptText(prompt), provider, cache)
    except DetectionFailedError as exc:
        click.echo(f"error: {exc}", err=True)
        if exc.last_raw:
            click.echo(f"last response: {exc.last_raw[:400]}", err=True)
        sys.exit(2)
    except ValidationError as exc:
        _fail(str(exc), 1)
    if result.from_cache:
        click.echo("(served from cache)", err=True)
    click.echo(result.catalog.to_json())


@main.command()
@click.argument("prompt")
@click.option("--n", required=True, type=int, help="Number of images to generate.")
@click.option("--target", "target_str", default="uniform", show_default=True,
              help="uniform | stats:FILE:OCC | stats:OCC | custom:FILE")
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--backend", "backend_str", default="mock", show_default=True,
              help="mock | http (FAIRGUIDE_BACKEND_URL) | an explicit URL")
@click.option("--out", "out_dir", default=None, type=click.Path(),
              help="Run output directory [default: runs, or out_dir from --config].")
@click.option("--run-id", default=None)
@click.option("--catalog", "catalog_file", type=click.Path(exists=True), default=None,
              help="Catalog JSON file; skips detection.")
@click.option("--mock-detect", is_flag=True, help="Use the scripted mock detector.")
@click.option("--mock-script", type=click.Path(exists=True), default=None)
@click.option("--categories", default=None,
              help="Comma-separated category filter (default: all detected).")
@click.option("--fuse", "fuse_mode", type=click.Choice(["fallback", "llm"]),
              default="fallback", show_default=True)
@click.option("--parallelism", default=None, type=int,
              help="Concurrent backend calls [default: 4].")
@click.option("--retries", default=None, type=int,
              help="HTTP backend retry count [default: 2].")
@click.option("--profile", type=click.Choice(["sd15", "sd35"]), default=None,
              help="Generation profile [default: sd15].")
@click.option("--cache", "cache_path", type=click.Path(), default=None)
@click.pass_context
def generate(ctx, prompt, n, target_str, seed, backend_str, out_dir, run_id,
             catalog_file, mock_detect, mock_script, categories, fuse_mode,
             parallelism, retries, profile, cache_path):
    """Full pipeline: detect, build distribution, sample, fuse, generate, persist."""
    y = PromptText(prompt)
    try:
        spec = parse_target(target_str)
    except ValidationError as exc:
        _fail(str(exc), 1)

    out_dir = _resolve(out_dir, None, _file_cfg(ctx.obj, "out_dir"), "runs")
    parallelism = int(_resolve(parallelism, None, _file_cfg(ctx.obj, "parallelism"), 4))
    retries = int(_resolve(retries, None, _file_cfg(ctx.obj, "backend", "retries"), 2))
    profile = _resolve(profile, None, _file_cfg(ctx.obj, "backend", "profile"), "sd15")

    if catalog_file:
        catalog = AttributeCatalog.from_json(Path(catalog_file).read_text("utf-8"))
    else:
        provider = _make_detection_provider(ctx.obj, mock_detect, mock_script, None, None)
        cache = ResponseCache(cache_path) if cache_path else None
        try:
            catalog = detect_biases(y, provider, cache).catalog
        except DetectionFailedError as exc:
            _fail(str(exc), 2)
    if categories:
        catalog = subset_catalog(catalog, [c.strip() for c in categories.split(",")])
    try:
        ensure_valid_catalog(catalog)
    except ValidationError as exc:
        _fail(f"catalog invalid: {exc}", 1)

    if backend_str == "mock":
        backend = MockImageBackend()
    else:
        url = backend_str if backend_str != "http" else _resolve(
            None, BACKEND_URL_ENV, _file_cfg(ctx.obj, "backend", "base_url"), ""
        )
        if not url:
            _fail(f"no backend URL; set {BACKEND_URL_ENV} or pass one explicitly", 3)
        backend = HttpImageBackend(url, retries=retries)

    fuser = None
    if fuse_mode == "llm":
        fcfg = fusion_config()
        if not os.environ.get(fcfg.api_key_env):
            _fail(f"no fusion API key; set {API_KEY_ENV} or use --fuse fallback", 3)
        fprovider = HttpChatProvider(fcfg)

        def fuser(yy, assignment):
            result = fuse_prompt(yy, assignment, fprovider)
            return result.prompt, result.source

    try:
        manifest = generate_batch(
            y, catalog, spec, n, seed, backend, out_dir,
            run_id=run_id, parallelism=parallelism, fuser=fuser, profile=profile,
        )
    except BatchError as exc:
        click.echo(f"error: {exc}", err=True)
        click.echo(f"partial manifest retained at {exc.run_dir}", err=True)
        sys.exit(4)
    except ValidationError as exc:
        _fail(str(exc), 1)
    click.echo(f"run complete: {manifest.run_dir}")
    click.echo(f"entries: {len(manifest.entries)} (new: {manifest.newly_generated})")


@main.command()
@click.option("--manifest", "manifest_dir", required=True, type=click.Path(exists=True))
@click.option("--labels", "labels_file", type=click.Path(exists=True), default=None)
@click.option("--target", "target_str", default=None,
              help="Defaults to the target recorded in the run config.")
@click.option("--allow-partial", is_flag=True)
@click.option("--out", "out_file", type=click.Path(), default=None,
              help="Write the report JSON here (default: <manifest>/report.json).")
@click.option("--compare", "compare_dir", type=click.Path(exists=True), default=None,
              help="Second manifest; runs the bootstrap parity test per category.")
@click.option("--bootstrap", "n_boot", default=1000, show_default=True, type=int)
@click.option("--boot-seed", default=0, show_default=True, type=int)
def evaluate(manifest_dir, labels_file, target_str, allow_partial, out_file,
             compare_dir, n_boot, boot_seed):
    """Evaluate a run: per-category empirical vs target distribution and parity."""
    manifest = GenerationManifest.load(manifest_dir)
    spec = _spec_for(manifest, target_str)
    labels = LabelFile.from_csv(labels_file) if labels_file else None
    try:
        report = evaluate_run(manifest, spec, labels, allow_partial=allow_partial)
    except ValidationError as exc:
        _fail(str(exc), 1)
    out_path = Path(out_file) if out_file else Path(manifest_dir) / "report.json"
    out_path.write_text(report.to_json(), "utf-8")
    click.echo(report.to_text())
    click.echo(f"report written to {out_path}")

    if compare_dir:
        other = GenerationManifest.load(compare_dir)
        other_report = evaluate_run(other, _spec_for(other, target_str), None,
                                    allow_partial=allow_partial)
        tests = {}
        for cat in report.categories:
            target = cat.target
            mine = [e.assignment.as_dict()[cat.category] for e in manifest.entries]
            theirs = [e.assignment.as_dict()[cat.category] for e in other.entries]
            t = bootstrap_sp_test(theirs, mine, target, n_boot, boot_seed)
            tests[cat.category] = t.as_dict()
            click.echo(
                f"bootstrap {cat.category}: SP(other)-SP(this)={t.statistic:.4f} "
                f"p={t.p_value:.3f} (n_boot={n_boot})"
            )
        (out_path.parent / "bootstrap.json").write_text(
            json.dumps(tests, indent=2), "utf-8"
        )
        del other_report


def _spec_for(manifest: GenerationManifest, target_str: str | None) -> TargetSpec:
    if target_str:
        return parse_target(target_str)
    recorded = manifest.config.get("target", {})
    kind = recorded.get("kind", "uniform")
    if kind == "uniform":
        return TargetSpec.uniform()
    if kind == "statistics":
        return TargetSpec.statistics(bundled_statistics_table(), recorded["occupation"])
    from .core import AttributeDistribution

    return TargetSpec.custom_spec(AttributeDistribution.from_dict(recorded["weights"]))


@main.command()
@click.option("--check", "which", default="all", show_default=True,
              type=click.Choice(["prop1", "cfg", "fd", "fairness", "all"]))
@click.option("--seed", default=None, type=int,
              help="Override the default seed of seeded checks.")
def simulate(which, seed):
    """Run the analytic simulator checks and print residuals."""
    from . import acceptance

    if seed is not None and which == "fairness":
        results = [acceptance.check_fairness_steering(seed=seed)]
    else:
        results = acceptance.run_sim_checks(which)
    failed = _report(results)
    sys.exit(1 if failed else 0)


@main.command()
def verify():
    """Run the full primary acceptance suite (simulator, statistics, pipeline)."""
    from . import acceptance

    start = time.monotonic()
    results = acceptance.run_all_checks()
    failed = _report(results)
    click.echo(f"\n{len(results) - failed}/{len(results)} checks passed "
               f"in {time.monotonic() - start:.1f}s")
    sys.exit(1 if failed else 0)


def _report(results) -> int:
    failed = 0
    for r in results:
        click.echo(r.line())
        if not r.passed:
            failed += 1
    return failed


@main.command()
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8765, show_default=True, type=int)
@click.option("--runs-dir", default=None, type=click.Path(),
              help="Directory for generation runs [default: runs].")
@click.option("--state-dir", default=".fairguide", show_default=True, type=click.Path())
@click.option("--mock", is_flag=True, help="Mock provider and backend (no credentials).")
@click.option("--frontend", "frontend_dir", type=click.Path(), default="frontend",
              show_default=True)
@click.pass_context
def serve(ctx, host, port, runs_dir, state_dir, mock, frontend_dir):
    """Start the session/generation HTTP service for the companion UI."""
    import uvicorn

    from .service import ServiceConfig, create_app

    runs_dir = _resolve(runs_dir, None, _file_cfg(ctx.obj, "out_dir"), "runs")
    backend_url = _resolve(
        None, BACKEND_URL_ENV, _file_cfg(ctx.obj, "backend", "base_url"), "mock"
    )
    config = ServiceConfig(
        runs_dir=Path(runs_dir),
        state_path=Path(state_dir) / "sessions.json",
        provider="mock" if mock else "http",
        backend="mock" if mock else backend_url,
        parallelism=int(_resolve(None, None, _file_cfg(ctx.obj, "parallelism"), 4)),
        frontend_dir=Path(frontend_dir) if Path(frontend_dir).exists() else None,
    )
    uvicorn.run(create_app(config), host=host, port=port)


if __name__ == "__main__":
    main()
