"""Session-oriented HTTP service: detect, edit the attribute table, generate.

One active generation job per session; weight edits during a running job are
rejected with 409. Weights arrive as arbitrary nonnegative reals (slider
positions) and the server renormalizes per category, making it the single
source of truth the UI re-renders from.
"""

from __future__ import annotations

import json
import threading
import uuid
from dataclasses import dataclass, field
from pathlib import Path

from fastapi import FastAPI, HTTPException
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .core import (
    AttributeCatalog,
    AttributeDistribution,
    ProbabilityVector,
    PromptText,
    ValidationError,
    validate_catalog,
)
from .genbackend import BatchError, GenerationManifest, MockImageBackend, HttpImageBackend, generate_batch
from .llm import MockChatProvider, HttpChatProvider, detect_biases, detection_config
from .llm.templates import DETECTION_EXAMPLE_JSON
from .resample import TargetSpec


@dataclass
class ServiceConfig:
    runs_dir: Path = Path("runs")
    state_path: Path | None = None
    provider: str = "mock"  # "mock" | "http"
    backend: str = "mock"  # "mock" | base URL
    parallelism: int = 4
    detection_script: str = DETECTION_EXAMPLE_JSON
    frontend_dir: Path | None = None


@dataclass
class Session:
    session_id: str
    prompt: str
    catalog: dict[str, list[str]]
    weights: dict[str, dict[str, float]]
    target_kind: str = "custom"
    last_job: str | None = None


@dataclass
class Job:
    job_id: str
    session_id: str
    requested: int
    state: str = "queued"  # queued | running | done | failed
    run_dir: Path | None = None
    run_id: str | None = None
    error: str | None = None
    seed: int = 0


def _uniform_weights(catalog: AttributeCatalog) -> dict[str, dict[str, float]]:
    return {
        cat: {a: 1.0 / len(attrs) for a in attrs} for cat, attrs in catalog.entries
    }


def _renormalize(
    catalog: AttributeCatalog, raw: dict[str, dict[str, float]]
) -> dict[str, dict[str, float]]:
    """Validate slider weights against the catalog and normalize per category."""
    problems = []
    out: dict[str, dict[str, float]] = {}
    for cat, attrs in catalog.entries:
        given = raw.get(cat)
        if given is None:
            problems.append(f"missing weights for category {cat!r}")
            continue
        unknown = set(given) - set(attrs)
        if unknown:
            problems.append(f"unknown attributes {sorted(unknown)} in category {cat!r}")
            continue
        values = {a: float(given.get(a, 0.0)) for a in attrs}
        if any(v < 0 for v in values.values()):
            problems.append(f"negative weight in category {cat!r}")
            continue
        total = sum(values.values())
        if total <= 0:
            problems.append(f"weights for category {cat!r} sum to zero")
            continue
        out[cat] = {a: v / total for a, v in values.items()}
    extra = set(raw) - set(catalog.category_names)
    if extra:
        problems.append(f"weights given for unknown categories {sorted(extra)}")
    if problems:
        raise ValidationError("; ".join(problems))
    return out


class SessionStore:
    """In-memory sessions with a JSON snapshot written on every mutation."""

    def __init__(self, state_path: Path | None):
        self._lock = threading.RLock()
        self._sessions: dict[str, Session] = {}
        self._path = state_path
        if state_path and state_path.exists():
            data = json.loads(state_path.read_text("utf-8"))
            for sid, s in data.items():
                self._sessions[sid] = Session(**s)

    def _snapshot(self) -> None:
        if self._path is None:
            return
        self._path.parent.mkdir(parents=True, exist_ok=True)
        data = {
            sid: {
                "session_id": s.session_id,
                "prompt": s.prompt,
                "catalog": s.catalog,
                "weights": s.weights,
                "target_kind": s.target_kind,
                "last_job": s.last_job,
            }
            for sid, s in self._sessions.items()
        }
        self._path.write_text(json.dumps(data, indent=2), "utf-8")

    def add(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.session_id] = session
            self._snapshot()

    def get(self, session_id: str) -> Session:
        session = self._sessions.get(session_id)
        if session is None:
            raise KeyError(session_id)
        return session

    def update(self, session: Session) -> None:
        with self._lock:
            self._sessions[session.session_id] = session
            self._snapshot()


class SessionCreate(BaseModel):
    prompt: str


class TableUpdate(BaseModel):
    catalog: dict[str, list[str]]
    weights: dict[str, dict[str, float]]
    target_kind: str | None = None  # "custom" (edited weights) | "uniform"


class GenerateRequestBody(BaseModel):
    n: int
    seed: int | None = None
    backend: str | None = None


def create_app(config: ServiceConfig | None = None) -> FastAPI:
    config = config or ServiceConfig()
    app = FastAPI(title="fairguide service")
    store = SessionStore(config.state_path)
    jobs: dict[str, Job] = {}
    jobs_lock = threading.Lock()
    job_counter = {"n": 0}

    def _detect_catalog(prompt: str) -> AttributeCatalog:
        if config.provider == "mock":
            provider = MockChatProvider([config.detection_script])
        else:
            provider = HttpChatProvider(detection_config())
        return detect_biases(PromptText(prompt), provider).catalog

    def _make_backend(name: str | None):
        choice = name or config.backend
        if choice == "mock":
            return MockImageBackend()
        if choice == "http":
            choice = config.backend
        return HttpImageBackend(choice)

    def _session_or_404(session_id: str) -> Session:
        try:
            return store.get(session_id)
        except KeyError:
            raise HTTPException(404, f"unknown session {session_id}")

    def _active_job(session: Session) -> Job | None:
        if session.last_job is None:
            return None
        job = jobs.get(session.last_job)
        if job is not None and job.state in ("queued", "running"):
            return job
        return None

    def _session_body(session: Session) -> dict:
        return {
            "session_id": session.session_id,
            "prompt": session.prompt,
            "catalog": session.catalog,
            "weights": session.weights,
            "target_kind": session.target_kind,
            "last_job": session.last_job,
        }

    @app.post("/api/sessions")
    def create_session(body: SessionCreate):
        try:
            catalog = _detect_catalog(body.prompt)
        except ValidationError as exc:
            raise HTTPException(422, str(exc))
        session = Session(
            session_id=uuid.uuid4().hex[:12],
            prompt=body.prompt,
            catalog=catalog.as_dict(),
            weights=_uniform_weights(catalog),
        )
        store.add(session)
        return _session_body(session)

    @app.get("/api/sessions/{session_id}")
    def get_session(session_id: str):
        return _session_body(_session_or_404(session_id))

    @app.put("/api/sessions/{session_id}/table")
    def put_table(session_id: str, body: TableUpdate):
        session = _session_or_404(session_id)
        if _active_job(session) is not None:
            raise HTTPException(409, "a generation job is running for this session")
        catalog = AttributeCatalog.from_dict(body.catalog)
        violations = validate_catalog(catalog)
        if violations:
            raise HTTPException(422, {"violations": violations})
        if body.target_kind is not None and body.target_kind not in ("custom", "uniform"):
            raise HTTPException(422, {"violations": [f"unknown target kind {body.target_kind!r}"]})
        try:
            weights = _renormalize(catalog, body.weights)
        except ValidationError as exc:
            raise HTTPException(422, {"violations": [str(exc)]})
        session.catalog = catalog.as_dict()
        session.weights = weights
        if body.target_kind is not None:
            session.target_kind = body.target_kind
        store.update(session)
        return _session_body(session)

    def _run_job(job: Job, session: Session, backend) -> None:
        job.state = "running"
        try:
            catalog = AttributeCatalog.from_dict(session.catalog)
            if session.target_kind == "uniform":
                spec = TargetSpec.uniform()
            else:
                dist = AttributeDistribution(
                    tuple(
                        (
                            cat,
                            ProbabilityVector(
                                tuple(session.weights[cat].keys()),
                                tuple(session.weights[cat].values()),
                            ),
                        )
                        for cat, _ in catalog.entries
                    )
                )
                spec = TargetSpec.custom_spec(dist)
            generate_batch(
                PromptText(session.prompt),
                catalog,
                spec,
                job.requested,
                job.seed,
                backend,
                config.runs_dir,
                run_id=job.run_id,
                parallelism=config.parallelism,
            )
            job.state = "done"
        except BatchError as exc:
            job.error = str(exc)
            job.state = "failed"
        except Exception as exc:  # surfaced through job status
            job.error = str(exc)
            job.state = "failed"

    @app.post("/api/sessions/{session_id}/generate")
    def post_generate(session_id: str, body: GenerateRequestBody):
        session = _session_or_404(session_id)
        if body.n < 1:
            raise HTTPException(422, "n must be >= 1")
        with jobs_lock:
            if _active_job(session) is not None:
                raise HTTPException(409, "a generation job is already running")
            job_counter["n"] += 1
            job_id = f"job-{job_counter['n']}-{uuid.uuid4().hex[:6]}"
            job = Job(
                job_id=job_id,
                session_id=session_id,
                requested=body.n,
                seed=body.seed if body.seed is not None else 0,
                run_id=job_id,
                run_dir=config.runs_dir / job_id,
            )
            jobs[job.job_id] = job
            session.last_job = job.job_id
            store.update(session)
        backend = _make_backend(body.backend)
        thread = threading.Thread(target=_run_job, args=(job, session, backend), daemon=True)
        thread.start()
        return {"job_id": job.job_id}

    def _job_or_404(job_id: str) -> Job:
        job = jobs.get(job_id)
        if job is None:
            raise HTTPException(404, f"unknown job {job_id}")
        return job

    def _completed(job: Job) -> int:
        path = job.run_dir / "manifest.jsonl"
        if not path.exists():
            return 0
        return sum(1 for line in path.read_text("utf-8").splitlines() if line.strip())

    @app.get("/api/jobs/{job_id}")
    def job_status(job_id: str):
        job = _job_or_404(job_id)
        return {
            "job_id": job.job_id,
            "session_id": job.session_id,
            "state": job.state,
            "completed": _completed(job),
            "requested": job.requested,
            "manifest": job.run_id,
            "error": job.error,
        }

    @app.get("/api/jobs/{job_id}/results")
    def job_results(job_id: str):
        job = _job_or_404(job_id)
        if not (job.run_dir / "config.json").exists():
            return {"job_id": job.job_id, "state": job.state, "results": []}
        manifest = GenerationManifest.load(job.run_dir)
        results = [
            {
                "index": e.index,
                "image_url": f"/runs/{job.run_dir.name}/{e.image_ref}",
                "fused_prompt": e.fused_prompt,
                "assignment": e.assignment.as_dict(),
            }
            for e in manifest.entries
        ]
        return {"job_id": job.job_id, "state": job.state, "results": results}

    config.runs_dir.mkdir(parents=True, exist_ok=True)
    app.mount("/runs", StaticFiles(directory=config.runs_dir), name="runs")

    if config.frontend_dir is not None and (config.frontend_dir / "index.html").exists():
        frontend = config.frontend_dir

        @app.get("/")
        def index():
            return FileResponse(frontend / "index.html")

        if (frontend / "dist").exists():
            app.mount("/dist", StaticFiles(directory=frontend / "dist"), name="dist")
        if (frontend / "styles.css").exists():
            @app.get("/styles.css")
            def styles():
                return FileResponse(frontend / "styles.css")

    return app
