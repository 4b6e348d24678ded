import json
from pathlib import Path

import pytest
from click.testing import CliRunner

from fairguide.cli import main
from fairguide.genbackend import manifest_canonical_bytes
from fairguide.llm.providers import API_KEY_ENV, BASE_URL_ENV, FUSION_API_KEY_ENV, FUSION_BASE_URL_ENV

FIREFIGHTER = {
    "gender": ["male", "female", "non-binary"],
    "age": ["young adult", "middle-aged", "elderly"],
    "race": ["White", "Asian", "Black", "Hispanic"],
}


@pytest.fixture
def runner(monkeypatch):
    for var in (API_KEY_ENV, BASE_URL_ENV, FUSION_API_KEY_ENV, FUSION_BASE_URL_ENV):
        monkeypatch.delenv(var, raising=False)
    return CliRunner()


class TestDetect:
    def test_mock_prints_catalog(self, runner):
        result = runner.invoke(main, ["detect", "a firefighter", "--mock"])
        assert result.exit_code == 0, result.output
        assert json.loads(result.output) == FIREFIGHTER

    def test_missing_key_exit_3(self, runner):
        result = runner.invoke(main, ["detect", "a firefighter"])
        assert result.exit_code == 3
        assert API_KEY_ENV in result.output

    def test_detection_failure_exit_2(self, runner, tmp_path):
        script = tmp_path / "bad.txt"
        script.write_text("not json at all")
        result = runner.invoke(
            main, ["detect", "x", "--mock", "--mock-script", str(script)]
        )
        assert result.exit_code == 2

    def test_second_run_cached(self, runner, tmp_path):
        cache = tmp_path / "cache.jsonl"
        first = runner.invoke(
            main, ["detect", "a firefighter", "--mock", "--cache", str(cache)]
        )
        assert first.exit_code == 0
        second = runner.invoke(
            main, ["detect", "a firefighter", "--mock", "--cache", str(cache)]
        )
        assert second.exit_code == 0
        assert "served from cache" in second.output


class TestGenerate:
    def test_mock_pipeline_deterministic(self, runner, tmp_path):
        args = [
            "generate", "a firefighter", "--n", "8", "--target", "uniform",
            "--seed", "1", "--backend", "mock", "--mock-detect",
        ]
        r1 = runner.invoke(main, args + ["--out", str(tmp_path / "a")])
        assert r1.exit_code == 0, r1.output
        r2 = runner.invoke(main, args + ["--out", str(tmp_path / "b")])
        assert r2.exit_code == 0
        run_a = next((tmp_path / "a").iterdir())
        run_b = next((tmp_path / "b").iterdir())
        assert manifest_canonical_bytes(run_a) == manifest_canonical_bytes(run_b)
        entries = [
            json.loads(line)
            for line in (run_a / "manifest.jsonl").read_text().splitlines()
        ]
        assert len(entries) == 8

    def test_rerun_zero_regenerated(self, runner, tmp_path):
        args = [
            "generate", "a firefighter", "--n", "5", "--target", "uniform",
            "--seed", "2", "--backend", "mock", "--mock-detect",
            "--out", str(tmp_path),
        ]
        first = runner.invoke(main, args)
        assert first.exit_code == 0, first.output
        assert "new: 5" in first.output
        second = runner.invoke(main, args)
        assert second.exit_code == 0
        assert "new: 0" in second.output

    def test_stats_target_recorded(self, runner, tmp_path):
        catalog_file = tmp_path / "catalog.json"
        catalog_file.write_text(json.dumps(
            {"gender": ["female", "male"], "race": ["White", "Black", "Asian", "Hispanic"]}
        ))
        result = runner.invoke(main, [
            "generate", "A headshot of a CEO", "--n", "4", "--target", "stats:CEO",
            "--seed", "0", "--backend", "mock", "--catalog", str(catalog_file),
            "--out", str(tmp_path / "runs"),
        ])
        assert result.exit_code == 0, result.output
        run_dir = next((tmp_path / "runs").iterdir())
        config = json.loads((run_dir / "config.json").read_text())
        assert config["target"]["weights"]["gender"] == {"female": 0.33, "male": 0.67}

    def test_stats_target_with_file(self, runner, tmp_path):
        table_file = tmp_path / "bls.json"
        table_file.write_text(json.dumps(
            {"CEO": {"gender": {"female": 33.0, "male": 67.0},
                     "race": {"White": 82.2, "Black": 5.8, "Asian": 6.1, "Hispanic": 5.8}}}
        ))
        catalog_file = tmp_path / "catalog.json"
        catalog_file.write_text(json.dumps(
            {"gender": ["female", "male"], "race": ["White", "Black", "Asian", "Hispanic"]}
        ))
        result = runner.invoke(main, [
            "generate", "A headshot of a CEO", "--n", "2",
            "--target", f"stats:{table_file}:CEO",
            "--backend", "mock", "--catalog", str(catalog_file),
            "--out", str(tmp_path / "runs"),
        ])
        assert result.exit_code == 0, result.output

    def test_category_filter(self, runner, tmp_path):
        result = runner.invoke(main, [
            "generate", "a firefighter", "--n", "2", "--backend", "mock",
            "--mock-detect", "--categories", "gender,age",
            "--out", str(tmp_path),
        ])
        assert result.exit_code == 0, result.output
        run_dir = next(tmp_path.iterdir())
        entry = json.loads((run_dir / "manifest.jsonl").read_text().splitlines()[0])
        assert set(entry["assignment"]) == {"gender", "age"}

    def test_missing_backend_url_exit_3(self, runner, tmp_path):
        result = runner.invoke(main, [
            "generate", "x", "--n", "1", "--backend", "http", "--mock-detect",
            "--out", str(tmp_path),
        ])
        assert result.exit_code == 3


class TestEvaluate:
    def test_report_files(self, runner, tmp_path):
        gen = runner.invoke(main, [
            "generate", "a firefighter", "--n", "300", "--target", "uniform",
            "--seed", "3", "--backend", "mock", "--mock-detect",
            "--out", str(tmp_path),
        ])
        assert gen.exit_code == 0, gen.output
        run_dir = next(p for p in tmp_path.iterdir() if p.is_dir())
        result = runner.invoke(main, ["evaluate", "--manifest", str(run_dir)])
        assert result.exit_code == 0, result.output
        report = json.loads((run_dir / "report.json").read_text())
        for cat in report["categories"].values():
            assert cat["sp"] < 0.1
        assert "SP =" in result.output

    def test_compare_bootstrap(self, runner, tmp_path):
        for seed, sub in (("4", "a"), ("5", "b")):
            r = runner.invoke(main, [
                "generate", "a firefighter", "--n", "60", "--target", "uniform",
                "--seed", seed, "--backend", "mock", "--mock-detect",
                "--out", str(tmp_path / sub),
            ])
            assert r.exit_code == 0, r.output
        run_a = next((tmp_path / "a").iterdir())
        run_b = next((tmp_path / "b").iterdir())
        result = runner.invoke(main, [
            "evaluate", "--manifest", str(run_a), "--compare", str(run_b),
            "--bootstrap", "200",
        ])
        assert result.exit_code == 0, result.output
        assert "bootstrap gender" in result.output
        boot = json.loads((run_a / "bootstrap.json").read_text())
        assert 0.0 <= boot["gender"]["p_value"] <= 1.0


class TestSimulate:
    def test_prop1_check(self, runner):
        result = runner.invoke(main, ["simulate", "--check", "prop1"])
        assert result.exit_code == 0, result.output
        assert result.output.count("[PASS]") == 2

    def test_cfg_check(self, runner):
        result = runner.invoke(main, ["simulate", "--check", "cfg"])
        assert result.exit_code == 0, result.output
        assert "criterion 3" in result.output
