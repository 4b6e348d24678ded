import base64
import json
import threading

import httpx
import pytest

from fairguide.core import AttributeCatalog, PromptText, ValidationError
from fairguide.genbackend import (
    BackendError,
    BatchError,
    GenerationManifest,
    GenerationRequest,
    HttpImageBackend,
    MalformedPayloadError,
    MockImageBackend,
    PNG_MAGIC,
    generate_batch,
    http_generate,
    manifest_canonical_bytes,
    mock_generate,
)
from fairguide.resample import TargetSpec, bundled_statistics_table

CATALOG = AttributeCatalog.from_dict(
    {"gender": ["male", "female", "non-binary"], "age": ["young", "old"]}
)


def req(prompt="a cat", seed=0, **kw):
    return GenerationRequest(PromptText(prompt), seed, **kw)


class TestMockGenerate:
    def test_deterministic(self):
        assert mock_generate(req()).png == mock_generate(req()).png

    def test_seed_changes_pixels(self):
        assert mock_generate(req(seed=1)).png != mock_generate(req(seed=2)).png

    def test_prompt_changes_pixels(self):
        assert mock_generate(req("a cat")).png != mock_generate(req("a dog")).png

    def test_metadata_echoes_request(self):
        image = mock_generate(req("a fox", seed=9, width=1024, height=768, guidance_scale=4.0))
        assert image.metadata["prompt"] == "a fox"
        assert image.metadata["seed"] == 9
        assert image.metadata["width"] == 1024
        assert image.metadata["height"] == 768
        assert image.metadata["guidance_scale"] == 4.0

    def test_valid_png(self):
        assert mock_generate(req()).png.startswith(PNG_MAGIC)

    def test_request_validation(self):
        with pytest.raises(ValidationError):
            GenerationRequest(PromptText("x"), seed=-1)
        with pytest.raises(ValidationError):
            GenerationRequest(PromptText("x"), seed=0, width=0)


FIXED_PNG = mock_generate(req("stub", 0)).png


class TestHttpGenerate:
    def _client(self, handler):
        return httpx.Client(transport=httpx.MockTransport(handler))

    def test_passthrough(self):
        seen = {}

        def handler(request):
            seen["body"] = json.loads(request.content)
            seen["url"] = str(request.url)
            return httpx.Response(
                200,
                json={"images": [base64.b64encode(FIXED_PNG).decode()], "model": "sd-test"},
            )

        image = http_generate(
            req("a cat", 3, guidance_scale=7.5), "http://backend", client=self._client(handler)
        )
        assert image.png == FIXED_PNG
        assert image.metadata["model"] == "sd-test"
        assert seen["url"] == "http://backend/v1/generate"
        assert seen["body"] == {
            "prompt": "a cat",
            "seed": 3,
            "width": 512,
            "height": 512,
            "guidance_scale": 7.5,
            "num_images": 1,
        }

    def test_retries_then_success(self):
        calls = {"n": 0}

        def handler(request):
            calls["n"] += 1
            if calls["n"] <= 2:
                return httpx.Response(500, text="boom")
            return httpx.Response(
                200, json={"images": [base64.b64encode(FIXED_PNG).decode()], "model": "m"}
            )

        image = http_generate(
            req(), "http://backend", retries=2, backoff_base=0.0, client=self._client(handler)
        )
        assert image.png == FIXED_PNG
        assert calls["n"] == 3

    def test_retries_exhausted(self):
        def handler(request):
            return httpx.Response(503, text="down")

        with pytest.raises(BackendError) as err:
            http_generate(
                req(), "http://backend", retries=1, backoff_base=0.0,
                client=self._client(handler),
            )
        assert err.value.status == 503

    def test_invalid_base64(self):
        def handler(request):
            return httpx.Response(200, json={"images": ["!!!not-base64!!!"], "model": "m"})

        with pytest.raises(MalformedPayloadError):
            http_generate(req(), "http://backend", client=self._client(handler))

    def test_not_a_png(self):
        def handler(request):
            return httpx.Response(
                200, json={"images": [base64.b64encode(b"plain bytes").decode()], "model": "m"}
            )

        with pytest.raises(MalformedPayloadError):
            http_generate(req(), "http://backend", client=self._client(handler))


class TestGenerateBatch:
    def test_degenerate_spec(self, tmp_path):
        from fairguide.core import AttributeDistribution

        spec = TargetSpec.custom_spec(
            AttributeDistribution.from_dict(
                {"gender": {"male": 0, "female": 1, "non-binary": 0},
                 "age": {"young": 1, "old": 0}}
            )
        )
        manifest = generate_batch(
            PromptText("a nurse"), CATALOG, spec, 4, 0, MockImageBackend(), tmp_path
        )
        assert len(manifest.entries) == 4
        assignments = {json.dumps(e.assignment.as_dict()) for e in manifest.entries}
        assert len(assignments) == 1
        assert manifest.entries[0].assignment.as_dict() == {"gender": "female", "age": "young"}

    def test_uniform_frequencies(self, tmp_path):
        manifest = generate_batch(
            PromptText("a nurse"), CATALOG, TargetSpec.uniform(), 1000, 11,
            MockImageBackend(), tmp_path,
        )
        counts = {}
        for e in manifest.entries:
            g = e.assignment.as_dict()["gender"]
            counts[g] = counts.get(g, 0) + 1
        for g in ("male", "female", "non-binary"):
            assert abs(counts[g] / 1000 - 1 / 3) < 0.05

    def test_entry_contents(self, tmp_path):
        manifest = generate_batch(
            PromptText("a vet"), CATALOG, TargetSpec.uniform(), 3, 5,
            MockImageBackend(), tmp_path,
        )
        entry = manifest.entries[2]
        assert entry.index == 2
        assert entry.seed == 7  # base seed + index
        assert entry.original_prompt == "a vet"
        assert entry.fusion_source == "fallback"
        assert entry.fused_prompt.startswith("a vet, ")
        assert (manifest.run_dir / entry.image_ref).exists()

    def test_resume_regenerates_only_missing(self, tmp_path):
        spec = TargetSpec.uniform()
        y = PromptText("a vet")
        manifest = generate_batch(y, CATALOG, spec, 4, 2, MockImageBackend(), tmp_path)
        run_dir = manifest.run_dir
        original = {
            i: (run_dir / f"{i}.png").read_bytes() for i in range(4)
        }
        # delete entries 2..3 (images and manifest lines survive for 0..1)
        (run_dir / "2.png").unlink()
        (run_dir / "3.png").unlink()

        backend = MockImageBackend()
        resumed = generate_batch(y, CATALOG, spec, 4, 2, backend, tmp_path)
        assert backend.calls == 2
        assert resumed.newly_generated == 2
        for i in range(4):
            assert (run_dir / f"{i}.png").read_bytes() == original[i]

    def test_rerun_is_fully_cached(self, tmp_path):
        y = PromptText("a vet")
        generate_batch(y, CATALOG, TargetSpec.uniform(), 6, 3, MockImageBackend(), tmp_path)
        backend = MockImageBackend()
        rerun = generate_batch(y, CATALOG, TargetSpec.uniform(), 6, 3, backend, tmp_path)
        assert backend.calls == 0
        assert rerun.newly_generated == 0
        assert rerun.complete

    def test_parallel_matches_serial(self, tmp_path):
        y = PromptText("a vet")
        spec = TargetSpec.uniform()
        serial = generate_batch(
            y, CATALOG, spec, 12, 4, MockImageBackend(), tmp_path / "serial", parallelism=1
        )
        parallel = generate_batch(
            y, CATALOG, spec, 12, 4, MockImageBackend(), tmp_path / "parallel", parallelism=6
        )
        assert manifest_canonical_bytes(serial.run_dir) == manifest_canonical_bytes(
            parallel.run_dir
        )

    def test_config_mismatch_rejected(self, tmp_path):
        y = PromptText("a vet")
        manifest = generate_batch(
            y, CATALOG, TargetSpec.uniform(), 2, 0, MockImageBackend(), tmp_path
        )
        with pytest.raises(ValidationError, match="different configuration"):
            generate_batch(
                y, CATALOG, TargetSpec.uniform(), 2, 1, MockImageBackend(), tmp_path,
                run_id=manifest.run_id,
            )

    def test_backend_failure_keeps_partial_manifest(self, tmp_path):
        class FlakyBackend:
            backend_id = "flaky"

            def __init__(self):
                self.lock = threading.Lock()

            def generate(self, request):
                if request.seed % 2 == 1:
                    raise BackendError("boom")
                return mock_generate(request)

        with pytest.raises(BatchError) as err:
            generate_batch(
                PromptText("a vet"), CATALOG, TargetSpec.uniform(), 6, 0,
                FlakyBackend(), tmp_path, parallelism=2,
            )
        assert err.value.completed == 3
        reloaded = GenerationManifest.load(err.value.run_dir)
        assert sorted(e.index for e in reloaded.entries) == [0, 2, 4]
        assert not reloaded.complete

    def test_invalid_catalog_rejected(self, tmp_path):
        bad = AttributeCatalog.from_dict({"gender": ["male"]})
        with pytest.raises(ValidationError):
            generate_batch(
                PromptText("x"), bad, TargetSpec.uniform(), 1, 0, MockImageBackend(), tmp_path
            )

    def test_statistics_weights_in_config(self, tmp_path):
        catalog = AttributeCatalog.from_dict(
            {"gender": ["female", "male"], "race": ["White", "Black", "Asian", "Hispanic"]}
        )
        spec = TargetSpec.statistics(bundled_statistics_table(), "CEO")
        manifest = generate_batch(
            PromptText("A headshot of a CEO"), catalog, spec, 2, 0,
            MockImageBackend(), tmp_path,
        )
        assert manifest.config["target"]["kind"] == "statistics"
        assert manifest.config["target"]["occupation"] == "CEO"
        assert manifest.config["target"]["weights"]["gender"] == {
            "female": 0.33, "male": 0.67
        }

    def test_llm_fuser_flag_recorded(self, tmp_path):
        def fuser(y, assignment):
            return PromptText(f"{y.text} with {len(assignment.entries)} attrs"), "llm"

        manifest = generate_batch(
            PromptText("a vet"), CATALOG, TargetSpec.uniform(), 2, 0,
            MockImageBackend(), tmp_path, fuser=fuser,
        )
        assert all(e.fusion_source == "llm" for e in manifest.entries)
        assert manifest.entries[0].fused_prompt == "a vet with 2 attrs"
