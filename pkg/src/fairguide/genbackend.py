"""Image-generation backends (deterministic mock + HTTP contract) and the
resumable batch orchestrator that persists a generation manifest.

Run directory layout: <out_dir>/<run_id>/{config.json, manifest.jsonl,
<index>.png}. Manifest entries append as they complete and the file is
rewritten in index order on finalize, so an interrupted run resumes at the
missing indices.
"""

from __future__ import annotations

import base64
import hashlib
import io
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import httpx
import numpy as np
from PIL import Image

from .core import (
    AttributeAssignment,
    AttributeCatalog,
    PromptText,
    ValidationError,
    ensure_valid_catalog,
)
from .resample import TargetSpec, build_fair_distribution, fallback_fuse, sample_assignment

PNG_MAGIC = b"\x89PNG\r\n\x1a\n"


@dataclass(frozen=True)
class BackendProfile:
    name: str
    width: int
    height: int
    guidance_scale: float


# Default generation profiles for the two supported model generations.
PROFILES = {
    "sd15": BackendProfile("sd15", 512, 512, 7.5),
    "sd35": BackendProfile("sd35", 1024, 1024, 4.0),
}
DEFAULT_PROFILE = "sd15"


@dataclass(frozen=True)
class GenerationRequest:
    prompt: PromptText
    seed: int
    width: int = 512
    height: int = 512
    guidance_scale: float = 7.5

    def __post_init__(self) -> None:
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("width and height must be positive")
        if self.seed < 0:
            raise ValidationError("seed must be nonnegative")


@dataclass(frozen=True)
class GeneratedImage:
    png: bytes
    metadata: dict


class BackendError(RuntimeError):
    """Backend hard failure after retries; carries the HTTP status when known."""

    def __init__(self, message: str, status: int | None = None):
        super().__init__(message)
        self.status = status


class MalformedPayloadError(BackendError):
    """Backend answered but the payload is not a usable image."""


def mock_generate(req: GenerationRequest) -> GeneratedImage:
    """Hermetic backend: a 16x16 PNG that is a pure function of (prompt, seed).

    Metadata echoes the request; requested width/height affect metadata only,
    keeping test artifacts small.
    """
    key = int.from_bytes(
        hashlib.blake2b(req.prompt.text.encode("utf-8"), digest_size=8).digest(),
        "little",
    )
    rng = np.random.default_rng((key, req.seed))
    arr = rng.integers(0, 256, size=(16, 16, 3), dtype=np.uint8)
    buf = io.BytesIO()
    Image.fromarray(arr, "RGB").save(buf, format="PNG")
    metadata = {
        "prompt": req.prompt.text,
        "seed": req.seed,
        "width": req.width,
        "height": req.height,
        "guidance_scale": req.guidance_scale,
        "model": "mock",
        "latency_s": 0.0,
    }
    return GeneratedImage(buf.getvalue(), metadata)


class MockImageBackend:
    backend_id = "mock"

    def __init__(self) -> None:
        self.calls = 0
        self._lock = threading.Lock()

    def generate(self, req: GenerationRequest) -> GeneratedImage:
        with self._lock:
            self.calls += 1
        return mock_generate(req)


def http_generate(
    req: GenerationRequest,
    base_url: str,
    retries: int = 2,
    timeout: float = 120.0,
    backoff_base: float = 0.2,
    client: httpx.Client | None = None,
) -> GeneratedImage:
    """POST the generation wire contract and decode the base64 PNG response.

    Retries transport and non-200 responses with exponential backoff; a
    malformed payload (bad JSON, bad base64, not a PNG) fails immediately.
    """
    own_client = client is None
    client = client or httpx.Client(timeout=timeout)
    payload = {
        "prompt": req.prompt.text,
        "seed": req.seed,
        "width": req.width,
        "height": req.height,
        "guidance_scale": req.guidance_scale,
        "num_images": 1,
    }
    url = base_url.rstrip("/") + "/v1/generate"
    try:
        last_error: str = ""
        last_status: int | None = None
        for attempt in range(retries + 1):
            if attempt:
                time.sleep(backoff_base * 2 ** (attempt - 1))
            start = time.monotonic()
            try:
                resp = client.post(url, json=payload)
            except httpx.HTTPError as exc:
                last_error, last_status = str(exc), None
                continue
            if resp.status_code != 200:
                last_error = f"status {resp.status_code}"
                last_status = resp.status_code
                continue
            latency = time.monotonic() - start
            try:
                body = resp.json()
                b64 = body["images"][0]
                png = base64.b64decode(b64, validate=True)
            except Exception as exc:
                raise MalformedPayloadError(f"unusable generation payload: {exc}") from exc
            if not png.startswith(PNG_MAGIC):
                raise MalformedPayloadError("decoded payload is not a PNG")
            metadata = {
                "prompt": req.prompt.text,
                "seed": req.seed,
                "width": req.width,
                "height": req.height,
                "guidance_scale": req.guidance_scale,
                "model": body.get("model", "unknown"),
                "latency_s": latency,
            }
            return GeneratedImage(png, metadata)
        raise BackendError(
            f"generation failed after {retries + 1} attempts: {last_error}", last_status
        )
    finally:
        if own_client:
            client.close()


class HttpImageBackend:
    def __init__(
        self,
        base_url: str,
        retries: int = 2,
        timeout: float = 120.0,
        backoff_base: float = 0.2,
        client: httpx.Client | None = None,
    ):
        if not base_url:
            raise ValidationError("backend base URL is empty")
        self.base_url = base_url
        self.retries = retries
        self.timeout = timeout
        self.backoff_base = backoff_base
        self.backend_id = f"http:{base_url}"
        self._client = client

    def generate(self, req: GenerationRequest) -> GeneratedImage:
        return http_generate(
            req,
            self.base_url,
            retries=self.retries,
            timeout=self.timeout,
            backoff_base=self.backoff_base,
            client=self._client,
        )


@dataclass(frozen=True)
class ManifestEntry:
    index: int
    original_prompt: str
    assignment: AttributeAssignment
    fused_prompt: str
    fusion_source: str  # "llm" | "fallback"
    seed: int
    image_ref: str
    backend_id: str
    timestamp: float

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "original_prompt": self.original_prompt,
            "assignment": self.assignment.as_dict(),
            "fused_prompt": self.fused_prompt,
            "fusion_source": self.fusion_source,
            "seed": self.seed,
            "image_ref": self.image_ref,
            "backend_id": self.backend_id,
            "timestamp": self.timestamp,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ManifestEntry":
        return cls(
            index=int(d["index"]),
            original_prompt=d["original_prompt"],
            assignment=AttributeAssignment.from_dict(d["assignment"]),
            fused_prompt=d["fused_prompt"],
            fusion_source=d["fusion_source"],
            seed=int(d["seed"]),
            image_ref=d["image_ref"],
            backend_id=d["backend_id"],
            timestamp=float(d["timestamp"]),
        )


@dataclass
class GenerationManifest:
    run_id: str
    config: dict
    entries: list[ManifestEntry]
    run_dir: Path | None = None
    newly_generated: int = 0

    @property
    def complete(self) -> bool:
        n = int(self.config.get("n", len(self.entries)))
        return sorted(e.index for e in self.entries) == list(range(n))

    @classmethod
    def load(cls, run_dir: str | Path) -> "GenerationManifest":
        run_dir = Path(run_dir)
        config = json.loads((run_dir / "config.json").read_text("utf-8"))
        entries: dict[int, ManifestEntry] = {}
        manifest_path = run_dir / "manifest.jsonl"
        if manifest_path.exists():
            for line in manifest_path.read_text("utf-8").splitlines():
                if line.strip():
                    e = ManifestEntry.from_dict(json.loads(line))
                    entries[e.index] = e
        ordered = [entries[i] for i in sorted(entries)]
        return cls(config["run_id"], config, ordered, run_dir)


class BatchError(RuntimeError):
    """Batch aborted; the partial manifest on disk is retained."""

    def __init__(self, message: str, run_dir: Path, completed: int):
        super().__init__(message)
        self.run_dir = run_dir
        self.completed = completed


FuseFn = Callable[[PromptText, AttributeAssignment], tuple[PromptText, str]]


def _fallback_fuser(y: PromptText, a: AttributeAssignment) -> tuple[PromptText, str]:
    return fallback_fuse(y, a), "fallback"


def _default_run_id(config: dict) -> str:
    digest = hashlib.blake2b(
        json.dumps(config, sort_keys=True).encode("utf-8"), digest_size=6
    ).hexdigest()
    return f"run-{digest}"


def _write_sorted_manifest(path: Path, entries: dict[int, ManifestEntry]) -> None:
    tmp = path.with_suffix(".tmp")
    with tmp.open("w", encoding="utf-8") as fh:
        for i in sorted(entries):
            fh.write(json.dumps(entries[i].as_dict(), sort_keys=True) + "\n")
    tmp.replace(path)


def generate_batch(
    y: PromptText,
    catalog: AttributeCatalog,
    spec: TargetSpec,
    n: int,
    seed: int,
    backend,
    out_dir: str | Path,
    run_id: str | None = None,
    parallelism: int = 4,
    fuser: FuseFn | None = None,
    profile: str = DEFAULT_PROFILE,
) -> GenerationManifest:
    """Sample assignments, fuse prompts, generate images, persist the manifest.

    Index i uses assignment stream (seed, i) and backend seed seed + i, so the
    batch is order-independent and an interrupted run resumes at exactly the
    missing indices, reproducing the original bytes.
    """
    ensure_valid_catalog(catalog)
    if n < 1:
        raise ValidationError("n must be >= 1")
    dist = build_fair_distribution(catalog, spec)
    fuser = fuser or _fallback_fuser
    prof = PROFILES[profile]

    target_desc = spec.describe()
    target_desc["weights"] = dist.as_dict()
    config = {
        "prompt": y.text,
        "catalog": catalog.as_dict(),
        "target": target_desc,
        "n": n,
        "seed": seed,
        "backend": backend.backend_id,
        "profile": prof.name,
    }
    run_id = run_id or _default_run_id(config)
    config = {"run_id": run_id, **config}

    run_dir = Path(out_dir) / run_id
    run_dir.mkdir(parents=True, exist_ok=True)
    config_path = run_dir / "config.json"
    if config_path.exists():
        existing = json.loads(config_path.read_text("utf-8"))
        if existing != config:
            raise ValidationError(
                f"run directory {run_dir} holds a different configuration; "
                "refusing to mix runs"
            )
    else:
        config_path.write_text(json.dumps(config, indent=2, sort_keys=True), "utf-8")

    manifest_path = run_dir / "manifest.jsonl"
    entries: dict[int, ManifestEntry] = {}
    if manifest_path.exists():
        for line in manifest_path.read_text("utf-8").splitlines():
            if line.strip():
                e = ManifestEntry.from_dict(json.loads(line))
                if (run_dir / e.image_ref).exists():
                    entries[e.index] = e

    missing = [i for i in range(n) if i not in entries]
    lock = threading.Lock()
    failures: list[tuple[int, Exception]] = []

    def produce(i: int) -> ManifestEntry:
        assignment = sample_assignment(dist, seed, i)
        fused, source = fuser(y, assignment)
        req = GenerationRequest(
            fused,
            seed=seed + i,
            width=prof.width,
            height=prof.height,
            guidance_scale=prof.guidance_scale,
        )
        image = backend.generate(req)
        image_ref = f"{i}.png"
        (run_dir / image_ref).write_bytes(image.png)
        return ManifestEntry(
            index=i,
            original_prompt=y.text,
            assignment=assignment,
            fused_prompt=fused.text,
            fusion_source=source,
            seed=seed + i,
            image_ref=image_ref,
            backend_id=backend.backend_id,
            timestamp=time.time(),
        )

    if missing:
        with ThreadPoolExecutor(max_workers=max(1, parallelism)) as pool:
            futures = {pool.submit(produce, i): i for i in missing}
            for fut in as_completed(futures):
                i = futures[fut]
                try:
                    entry = fut.result()
                except Exception as exc:  # keep going; report at the end
                    failures.append((i, exc))
                    continue
                with lock:
                    entries[entry.index] = entry
                    with manifest_path.open("a", encoding="utf-8") as fh:
                        fh.write(json.dumps(entry.as_dict(), sort_keys=True) + "\n")

    _write_sorted_manifest(manifest_path, entries)
    if failures:
        first_idx, first_exc = sorted(failures)[0]
        raise BatchError(
            f"{len(failures)} of {n} generations failed "
            f"(first: index {first_idx}: {first_exc}); partial manifest retained",
            run_dir,
            completed=len(entries),
        )
    manifest = GenerationManifest(
        run_id, config, [entries[i] for i in sorted(entries)], run_dir
    )
    manifest.newly_generated = len(missing)
    return manifest


def manifest_canonical_bytes(run_dir: str | Path, with_timestamps: bool = False) -> bytes:
    """Canonical manifest bytes for comparisons; timestamps stripped by default."""
    manifest = GenerationManifest.load(run_dir)
    lines = []
    for e in manifest.entries:
        d = e.as_dict()
        if not with_timestamps:
            d.pop("timestamp")
        lines.append(json.dumps(d, sort_keys=True))
    head = dict(manifest.config)
    return (json.dumps(head, sort_keys=True) + "\n" + "\n".join(lines) + "\n").encode()
