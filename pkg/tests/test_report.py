import json

import pytest

from fairguide.core import AttributeCatalog, AttributeDistribution, PromptText, ValidationError
from fairguide.evalstats import CoverageError, LabelFile
from fairguide.genbackend import MockImageBackend, generate_batch
from fairguide.report import evaluate_run
from fairguide.resample import TargetSpec, bundled_statistics_table

CATALOG = AttributeCatalog.from_dict(
    {"gender": ["male", "female", "non-binary"], "age": ["young", "old"]}
)


@pytest.fixture
def uniform_run(tmp_path):
    return generate_batch(
        PromptText("a judge"), CATALOG, TargetSpec.uniform(), 600, 8,
        MockImageBackend(), tmp_path,
    )


class TestSelfLabels:
    def test_uniform_parity_small(self, uniform_run):
        report = evaluate_run(uniform_run, TargetSpec.uniform())
        assert report.label_source == "manifest-assignments"
        for cat in report.categories:
            assert cat.sp < 0.07

    def test_degenerate_target_zero_parity(self, tmp_path):
        spec = TargetSpec.custom_spec(
            AttributeDistribution.from_dict(
                {"gender": {"male": 1, "female": 0, "non-binary": 0},
                 "age": {"young": 0, "old": 1}}
            )
        )
        manifest = generate_batch(
            PromptText("a judge"), CATALOG, spec, 50, 0, MockImageBackend(), tmp_path
        )
        report = evaluate_run(manifest, spec)
        assert all(cat.sp == 0.0 for cat in report.categories)

    def test_report_serialization(self, uniform_run):
        report = evaluate_run(uniform_run, TargetSpec.uniform())
        data = json.loads(report.to_json())
        assert set(data["categories"]) == {"gender", "age"}
        assert "sp" in data["categories"]["gender"]
        text = report.to_text()
        assert "gender" in text and "SP =" in text

    def test_incomplete_manifest_guard(self, uniform_run):
        uniform_run.entries.pop()
        with pytest.raises(ValidationError, match="incomplete"):
            evaluate_run(uniform_run, TargetSpec.uniform())
        report = evaluate_run(uniform_run, TargetSpec.uniform(), allow_partial=True)
        assert report.categories


def _label_csv(tmp_path, manifest, rows):
    path = tmp_path / "labels.csv"
    lines = ["image_id,category,label"]
    lines += [f"{i},{c},{l}" for i, c, l in rows]
    path.write_text("\n".join(lines) + "\n")
    return LabelFile.from_csv(path)


class TestExternalLabels:
    def test_coverage_error_lists_missing_ids(self, tmp_path):
        manifest = generate_batch(
            PromptText("a judge"), CATALOG, TargetSpec.uniform(), 4, 0,
            MockImageBackend(), tmp_path,
        )
        rows = [(f"{i}.png", "gender", "male") for i in range(2)]  # 2 of 4 missing
        labels = _label_csv(tmp_path, manifest, rows)
        with pytest.raises(CoverageError) as err:
            evaluate_run(manifest, TargetSpec.uniform(), labels)
        assert err.value.missing == ["2.png", "3.png"]

    def test_gender_uniform_target(self, tmp_path):
        manifest = generate_batch(
            PromptText("a judge"), CATALOG, TargetSpec.uniform(), 4, 0,
            MockImageBackend(), tmp_path,
        )
        rows = [(f"{i}.png", "gender", "male" if i < 2 else "female") for i in range(4)]
        report = evaluate_run(manifest, TargetSpec.uniform(), _label_csv(tmp_path, manifest, rows))
        (cat,) = report.categories
        assert cat.category == "gender"
        assert cat.empirical.as_dict() == {"male": 0.5, "female": 0.5}
        assert cat.sp == 0.0

    def test_race_merge_for_statistics_target(self, tmp_path):
        catalog = AttributeCatalog.from_dict(
            {"gender": ["female", "male"], "race": ["White", "Black", "Asian", "Hispanic"]}
        )
        spec = TargetSpec.statistics(bundled_statistics_table(), "CEO")
        manifest = generate_batch(
            PromptText("A headshot of a CEO"), catalog, spec, 8, 0,
            MockImageBackend(), tmp_path,
        )
        races = [
            "White", "White", "East Asian", "Southeast Asian",
            "Latino_Hispanic", "Black", "Middle Eastern", "Indian",
        ]
        rows = [(f"{i}.png", "race", races[i]) for i in range(8)]
        report = evaluate_run(manifest, spec, _label_csv(tmp_path, manifest, rows))
        (cat,) = report.categories
        # 2 dropped (ME, Indian); kept 6: White 2, Black 1, Asian 2, Hispanic 1
        assert cat.empirical.as_dict() == pytest.approx(
            {"White": 2 / 6, "Black": 1 / 6, "Asian": 2 / 6, "Hispanic": 1 / 6}
        )
        assert cat.target.labels == ("White", "Black", "Asian", "Hispanic")
        assert any("renormalized" in w for w in report.warnings)

    def test_unlabeled_rows_excluded_and_counted(self, tmp_path):
        manifest = generate_batch(
            PromptText("a judge"), CATALOG, TargetSpec.uniform(), 4, 0,
            MockImageBackend(), tmp_path,
        )
        rows = [("0.png", "gender", "male"), ("1.png", "gender", "female"),
                ("2.png", "gender", ""), ("3.png", "gender", "male")]
        report = evaluate_run(manifest, TargetSpec.uniform(), _label_csv(tmp_path, manifest, rows))
        (cat,) = report.categories
        assert cat.excluded == 1
        assert cat.empirical["male"] == pytest.approx(2 / 3)
