"""Local HTTP service: prior compilation and asynchronous generation.

One checkpoint per instance. Generation runs on a small worker pool;
forward passes share the immutable parameter dict and every job owns
its RNG, so concurrent jobs are reproducible independently.
"""

import hashlib
import json
import os
import threading
import time
import uuid
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse, Response

from ..checkpoint import load_params
from ..codec import TokenizedLoop, decode_loop_lenient
from ..diffusion import DiffusionConfig, generate
from ..errors import ConfigError, LoopdiffError, ParseError, VersionMismatch
from ..midi_io import render_midi
from ..model import Denoiser, DenoiserConfig
from ..priors import prior_from_doc, prior_to_doc, validate_prior
from ..tasks import PRESETS, TaskSpec, compile_task, preset_for, run_task
from ..vocab import build_vocabulary
from .models import (
    CompileRequest, CompileResponse, GenerateRequest, HealthResponse,
    JobRecord, SubmitResponse, Versions,
)

_STATUS_RANK = {"queued": 0, "running": 1, "done": 2, "failed": 2}


@dataclass
class Job:
    job_id: str
    kind: str
    status: str = "queued"
    created: float = field(default_factory=time.time)
    started: Optional[float] = None
    finished: Optional[float] = None
    error: Optional[str] = None
    echo: Optional[dict] = None
    task_dict: Optional[dict] = None
    prior_doc: Optional[dict] = None
    cfg: Optional[DiffusionConfig] = None
    tokens: Optional[TokenizedLoop] = None
    midi: Optional[bytes] = None
    notes: Optional[list] = None
    tempo_bpm: Optional[float] = None
    tag: Optional[str] = None
    skipped_slots: Optional[list] = None

    def transition(self, new: str):
        # status may only move forward: queued -> running -> done|failed
        if _STATUS_RANK[new] <= _STATUS_RANK[self.status]:
            raise RuntimeError(f"bad status move {self.status} -> {new}")
        self.status = new
        if new == "running":
            self.started = time.time()
        else:
            self.finished = time.time()


class ServiceState:
    def __init__(self, denoiser: Denoiser, checkpoint_version: str,
                 workers: Optional[int] = None):
        self.denoiser = denoiser
        self.vocab = denoiser.vocab
        self.n_slots = denoiser.cfg.n_slots
        self.checkpoint_version = checkpoint_version
        self.jobs = {}
        self.lock = threading.Lock()
        if workers is None:
            # logical core count stands in for physical; capped regardless
            workers = min(4, os.cpu_count() or 1)
        self.executor = ThreadPoolExecutor(max_workers=workers)

    @staticmethod
    def from_checkpoint(path, workers: Optional[int] = None) -> "ServiceState":
        vocab = build_vocabulary()
        params, config, _, _ = load_params(path, vocab.version)
        cfg = DenoiserConfig.from_dict(config)
        with open(path, "rb") as f:
            digest = hashlib.sha256(f.read()).hexdigest()[:12]
        return ServiceState(Denoiser(params, cfg, vocab), f"sha256:{digest}",
                            workers=workers)

    def versions(self) -> Versions:
        return Versions(vocabulary=self.vocab.version,
                        checkpoint=self.checkpoint_version)

    def job_counts(self) -> dict:
        with self.lock:
            counts = {s: 0 for s in _STATUS_RANK}
            for job in self.jobs.values():
                counts[job.status] += 1
        return counts


class FieldError(Exception):
    """Validation failure tied to a request field."""

    def __init__(self, fieldname: str, message: str):
        self.fieldname = fieldname
        self.message = message
        super().__init__(f"{fieldname}: {message}")


class NotFound(Exception):
    pass


def _note_dicts(events) -> list:
    out = []
    for ev in events:
        out.append({
            "instrument": ev.instrument,
            "pitch": ev.pitch,
            "is_drum": ev.is_drum,
            "onset_beat": ev.onset_beat,
            "onset_tick": ev.onset_tick,
            "offset_beat": ev.offset_beat,
            "offset_tick": ev.offset_tick,
            "velocity": ev.velocity,
        })
    return out


def _run_job(state: ServiceState, job: Job):
    with state.lock:
        job.transition("running")
    try:
        vocab = state.vocab
        if job.task_dict is not None:
            spec = TaskSpec.from_dict(job.task_dict)
            tok = run_task(spec, state.denoiser, job.cfg, vocab,
                           state.n_slots)
        else:
            prior = prior_from_doc(job.prior_doc, vocab)
            tok = generate(state.denoiser, prior, job.cfg, vocab,
                           n_slots=state.n_slots)
        sample, skipped = decode_loop_lenient(tok, vocab)
        with state.lock:
            job.tokens = tok
            job.midi = render_midi(sample)
            job.notes = _note_dicts(sample.events)
            job.tempo_bpm = sample.tempo_bpm
            job.tag = sample.tag
            job.skipped_slots = skipped
            job.transition("done")
    except Exception as e:  # noqa: BLE001 - job boundary
        with state.lock:
            job.error = f"{type(e).__name__}: {e}"
            job.transition("failed")


def _compile_from_task(state: ServiceState, task_dict: dict, n_slots: int):
    try:
        spec = TaskSpec.from_dict(task_dict)
        prior, start = compile_task(spec, state.vocab, n_slots)
    except (ConfigError, LoopdiffError, ValueError) as e:
        raise FieldError("task", str(e)) from e
    return spec, prior, start


def _resolve_prior_doc(state: ServiceState, req: GenerateRequest):
    """Returns (prior_doc, task_dict or None) after validation."""
    vocab = state.vocab
    if req.task is not None:
        task_dict = req.task.model_dump()
        _, prior, _ = _compile_from_task(state, task_dict, state.n_slots)
        doc = prior_to_doc(prior, vocab, task_spec=task_dict)
        return doc, task_dict
    if req.prior_path is not None:
        try:
            with open(req.prior_path, "r", encoding="utf-8") as f:
                doc = json.load(f)
        except OSError as e:
            raise FieldError("prior_path", f"cannot read file: {e}") from e
        except json.JSONDecodeError as e:
            raise FieldError("prior_path", f"not valid JSON: {e}") from e
    else:
        doc = req.prior
    try:
        prior = prior_from_doc(doc, vocab)
    except ParseError as e:
        raise FieldError("prior", str(e)) from e
    issues = validate_prior(prior, vocab)
    if issues:
        raise FieldError("prior", "; ".join(issues))
    if prior.n_slots != state.n_slots:
        raise FieldError("prior", f"prior has {prior.n_slots} slots, this "
                                  f"service runs {state.n_slots}")
    task_dict = doc.get("task_spec")
    if task_dict is not None and task_dict.get("kind") != "variation":
        task_dict = None     # plain priors replay without recompiling
    return doc, task_dict


def _effective_settings(req: GenerateRequest) -> tuple:
    base = DiffusionConfig()
    T, top_p = base.T, base.top_p
    if req.task is not None:
        preset = preset_for(req.task.kind)
        T, top_p = preset["T"], preset["top_p"]
    if req.T is not None:
        T = req.T
    if req.top_p is not None:
        top_p = req.top_p
    return T, top_p


def create_app(checkpoint_path=None, state: Optional[ServiceState] = None,
               workers: Optional[int] = None) -> FastAPI:
    if state is None:
        if checkpoint_path is None:
            raise ValueError("need a checkpoint path or a prepared state")
        state = ServiceState.from_checkpoint(checkpoint_path, workers=workers)

    app = FastAPI(title="loopdiff", docs_url=None, redoc_url=None)
    app.state.service = state

    def _versions_dict():
        return {"vocabulary": state.vocab.version,
                "checkpoint": state.checkpoint_version}

    @app.middleware("http")
    async def stamp_versions(request: Request, call_next):
        response = await call_next(request)
        response.headers["X-Vocabulary-Version"] = state.vocab.version
        response.headers["X-Checkpoint-Version"] = state.checkpoint_version
        return response

    @app.exception_handler(RequestValidationError)
    async def on_invalid(request: Request, exc: RequestValidationError):
        errors = []
        for e in exc.errors():
            loc = [str(x) for x in e["loc"] if x != "body"]
            errors.append({"field": ".".join(loc) or "body",
                           "message": e["msg"]})
        return JSONResponse(status_code=400, content={
            "errors": errors, "versions": _versions_dict()})

    @app.exception_handler(FieldError)
    async def on_field_error(request: Request, exc: FieldError):
        return JSONResponse(status_code=400, content={
            "errors": [{"field": exc.fieldname, "message": exc.message}],
            "versions": _versions_dict()})

    @app.exception_handler(VersionMismatch)
    async def on_version(request: Request, exc: VersionMismatch):
        return JSONResponse(status_code=409, content={
            "errors": [{"field": "version", "message": str(exc)}],
            "versions": _versions_dict()})

    @app.exception_handler(NotFound)
    async def on_not_found(request: Request, exc: NotFound):
        return JSONResponse(status_code=404, content={
            "errors": [{"field": "job_id", "message": str(exc)}],
            "versions": _versions_dict()})

    def _job_or_404(job_id: str) -> Job:
        with state.lock:
            job = state.jobs.get(job_id)
        if job is None:
            raise NotFound(f"unknown job {job_id!r}")
        return job

    @app.get("/health", response_model=HealthResponse)
    def health():
        return HealthResponse(status="ok", n_slots=state.n_slots,
                              jobs=state.job_counts(),
                              versions=state.versions())

    @app.get("/tasks")
    def tasks():
        return {"presets": PRESETS, "n_slots": state.n_slots,
                "versions": _versions_dict()}

    @app.post("/priors/compile", response_model=CompileResponse)
    def compile_prior(req: CompileRequest):
        n_slots = req.n_slots or state.n_slots
        task_dict = req.task.model_dump()
        spec, prior, _ = _compile_from_task(state, task_dict, n_slots)
        preset = preset_for(spec.kind)
        doc = prior_to_doc(prior, state.vocab, task_spec=task_dict)
        return CompileResponse(
            prior=doc,
            suggested={"T": preset["T"], "top_p": preset["top_p"]},
            issues=validate_prior(prior, state.vocab),
            versions=state.versions())

    @app.post("/generate", response_model=SubmitResponse)
    def submit(req: GenerateRequest):
        if req.checkpoint is not None and req.checkpoint != state.checkpoint_version:
            raise VersionMismatch(
                f"request pinned checkpoint {req.checkpoint}, service has "
                f"{state.checkpoint_version}")
        doc, task_dict = _resolve_prior_doc(state, req)
        T, top_p = _effective_settings(req)
        cfg = DiffusionConfig(T=T, top_p=top_p, seed=req.seed)
        job = Job(job_id=uuid.uuid4().hex[:12], kind="generate",
                  task_dict=task_dict, prior_doc=doc, cfg=cfg,
                  echo={"checkpoint": state.checkpoint_version, "prior": doc,
                        "T": T, "top_p": top_p, "seed": req.seed})
        with state.lock:
            state.jobs[job.job_id] = job
        state.executor.submit(_run_job, state, job)
        return SubmitResponse(job_id=job.job_id, status=job.status,
                              versions=state.versions())

    @app.get("/jobs/{job_id}", response_model=JobRecord)
    def job_record(job_id: str):
        job = _job_or_404(job_id)
        with state.lock:
            return JobRecord(job_id=job.job_id, kind=job.kind,
                             status=job.status, created=job.created,
                             started=job.started, finished=job.finished,
                             error=job.error, echo=job.echo,
                             versions=state.versions())

    @app.get("/jobs/{job_id}/result.mid")
    def job_midi(job_id: str):
        job = _job_or_404(job_id)
        if job.status != "done":
            raise NotFound(f"no result: job {job_id} is {job.status}")
        return Response(content=job.midi, media_type="audio/midi")

    @app.get("/jobs/{job_id}/result.json")
    def job_json(job_id: str):
        job = _job_or_404(job_id)
        if job.status != "done":
            raise NotFound(f"no result: job {job_id} is {job.status}")
        with state.lock:
            return {"job_id": job.job_id,
                    "tokens": job.tokens.tokens.tolist(),
                    "notes": job.notes,
                    "tempo_bpm": job.tempo_bpm,
                    "tag": job.tag,
                    "skipped_slots": job.skipped_slots,
                    "echo": job.echo,
                    "versions": _versions_dict()}

    return app
