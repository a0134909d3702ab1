"""Session-oriented HTTP facade over the engine.

Sessions persist to a small sqlite store plus on-disk blobs so a restarted
process can keep serving cached inversions. One worker thread executes jobs
(precompute and edits) off a bounded queue; progress events stream to clients
over long-poll status or server-sent events.
"""

from __future__ import annotations

import json
import logging
import queue
import sqlite3
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from fastapi import FastAPI, HTTPException, Request, UploadFile
from fastapi.responses import JSONResponse, Response, StreamingResponse

from .core import Image, LatentFS
from .errors import HairblendError, StageError, ValidationError
from .pipeline import EngineContext, PrecomputedSource, precompute_source, run_edit
from .recipes import recipe_to_request, schema
from .serialization import (
    feature_from_bytes,
    feature_to_bytes,
    image_from_png_bytes,
    image_to_png_bytes,
    latent_from_bytes,
    latent_to_bytes,
    load_image,
    load_mask,
    save_mask,
)

log = logging.getLogger(__name__)


@dataclass
class Job:
    id: str
    session_id: str
    kind: str  # precompute | edit
    state: str = "queued"
    stage: str = ""
    step: int = 0
    loss: float = 0.0
    error: str = ""
    result_path: Optional[str] = None
    report: Optional[dict] = None
    events: list = field(default_factory=list)
    cond: threading.Condition = field(default_factory=threading.Condition)
    payload: Optional[dict] = None

    def emit(self, event: dict) -> None:
        with self.cond:
            self.events.append(event)
            self.cond.notify_all()

    def status_dict(self) -> dict:
        out = {"id": self.id, "session": self.session_id, "kind": self.kind, "state": self.state}
        if self.state == "running":
            out.update({"stage": self.stage, "step": self.step, "loss": self.loss})
        if self.state == "failed":
            out.update({"stage": self.stage, "error": self.error})
        if self.state == "done" and self.report is not None:
            out["report"] = self.report
        return out


class SessionStore:
    """Sqlite-backed session metadata with TTL eviction; blobs live on disk."""

    def __init__(self, data_dir: Path, ttl_seconds: float):
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self.ttl_seconds = ttl_seconds
        self._lock = threading.Lock()
        self._db = sqlite3.connect(self.data_dir / "sessions.db", check_same_thread=False)
        self._db.execute(
            "CREATE TABLE IF NOT EXISTS sessions ("
            "id TEXT PRIMARY KEY, role TEXT, created REAL, precompute TEXT, history TEXT)"
        )
        self._db.commit()

    def session_dir(self, sid: str) -> Path:
        d = self.data_dir / "sessions" / sid
        d.mkdir(parents=True, exist_ok=True)
        return d

    def create(self, image_bytes: bytes, role: str) -> str:
        sid = uuid.uuid4().hex
        d = self.session_dir(sid)
        (d / "source.png").write_bytes(image_bytes)
        with self._lock:
            self._db.execute(
                "INSERT INTO sessions VALUES (?, ?, ?, ?, ?)",
                (sid, role, time.time(), "queued", "[]"),
            )
            self._db.commit()
        return sid

    def evict_expired(self) -> None:
        cutoff = time.time() - self.ttl_seconds
        with self._lock:
            rows = self._db.execute("SELECT id FROM sessions WHERE created < ?", (cutoff,)).fetchall()
            self._db.execute("DELETE FROM sessions WHERE created < ?", (cutoff,))
            self._db.commit()
        for (sid,) in rows:
            log.info("session %s expired", sid)

    def get(self, sid: str) -> Optional[dict]:
        with self._lock:
            row = self._db.execute(
                "SELECT id, role, created, precompute, history FROM sessions WHERE id = ?", (sid,)
            ).fetchone()
        if row is None:
            return None
        return {
            "id": row[0],
            "role": row[1],
            "created": row[2],
            "precompute": row[3],
            "history": json.loads(row[4]),
        }

    def set_precompute(self, sid: str, state: str) -> None:
        with self._lock:
            self._db.execute("UPDATE sessions SET precompute = ? WHERE id = ?", (state, sid))
            self._db.commit()

    def append_history(self, sid: str, entry: dict) -> None:
        with self._lock:
            row = self._db.execute("SELECT history FROM sessions WHERE id = ?", (sid,)).fetchone()
            if row is None:
                return
            history = json.loads(row[0])
            history.append(entry)
            self._db.execute(
                "UPDATE sessions SET history = ? WHERE id = ?", (json.dumps(history), sid)
            )
            self._db.commit()

    def source_image(self, sid: str) -> Image:
        return load_image(self.session_dir(sid) / "source.png")


class EngineService:
    def __init__(self, ctx: EngineContext, data_dir, queue_limit: int = 4, ttl_hours: float = 24.0):
        self.ctx = ctx
        self.store = SessionStore(Path(data_dir), ttl_hours * 3600.0)
        self.jobs: dict[str, Job] = {}
        self.queue: queue.Queue = queue.Queue(maxsize=queue_limit)
        self._jobs_lock = threading.Lock()
        self._stop = threading.Event()
        self.worker = threading.Thread(target=self._worker_loop, daemon=True)
        self.worker.start()

    def shutdown(self, drain: bool = True) -> None:
        if drain:
            self.queue.join()
        self._stop.set()
        self.queue.put(None)
        self.worker.join(timeout=30)

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            item = self.queue.get()
            if item is None:
                self.queue.task_done()
                break
            job: Job = item
            try:
                self._run_job(job)
            except Exception as exc:  # noqa: BLE001 - job boundary
                log.exception("job %s failed", job.id)
                job.state = "failed"
                job.error = str(exc)
                if isinstance(exc, StageError):
                    job.stage = exc.stage
                job.emit({"type": "failed", "stage": job.stage, "error": job.error})
            finally:
                self.queue.task_done()

    def _cache_paths(self, sid: str) -> dict:
        d = self.store.session_dir(sid)
        return {"latent": d / "inversion.wlat", "bald": d / "bald.fmap", "m_bald": d / "m_bald.pgm"}

    def _run_job(self, job: Job) -> None:
        job.state = "running"
        job.emit({"type": "state", "state": "running"})

        def progress(stage: str, step: int, loss: float) -> None:
            job.stage, job.step, job.loss = stage, step, loss
            job.emit({"type": "progress", "stage": stage, "step": step, "loss": loss})

        if job.kind == "precompute":
            self._precompute(job.session_id, progress)
            self.store.set_precompute(job.session_id, "done")
            job.state = "done"
            job.emit({"type": "state", "state": "done"})
            return

        src = self.store.source_image(job.session_id)
        req = recipe_to_request(
            job.payload, base_dir=self.store.data_dir, resolve_session=self._resolve_session_image
        )
        cached = self.cached_inversion(job.session_id)
        image, report = run_edit(src, req, self.ctx, progress=progress, precomputed=cached)
        d = self.store.session_dir(job.session_id)
        result_path = d / f"result-{job.id}.png"
        result_path.write_bytes(image_to_png_bytes(image))
        report_dict = report.to_dict()
        (d / f"report-{job.id}.json").write_text(json.dumps(report_dict, indent=2))
        job.result_path = str(result_path)
        job.report = report_dict
        job.state = "done"
        self.store.append_history(
            job.session_id, {"job": job.id, "completed": time.time(), "result": job.result_path}
        )
        job.emit({"type": "state", "state": "done", "result": job.id})

    def _precompute(self, sid: str, progress) -> None:
        paths = self._cache_paths(sid)
        if all(p.exists() for p in paths.values()):
            return
        src = self.store.source_image(sid)
        pre = precompute_source(src, self.ctx, progress=progress)
        fs = LatentFS(f7=pre.f_src, s=pre.w_src.layer_range(8, 18))
        paths["latent"].write_bytes(latent_to_bytes(pre.w_src, fs))
        paths["bald"].write_bytes(feature_to_bytes(pre.f_bald))
        save_mask(pre.m_bald, paths["m_bald"])

    def _resolve_session_image(self, sid: str) -> Image:
        if self.store.get(sid) is None:
            raise ValidationError(f"unknown session {sid!r}")
        return self.store.source_image(sid)

    def cached_inversion(self, sid: str) -> PrecomputedSource:
        paths = self._cache_paths(sid)
        w, fs = latent_from_bytes(paths["latent"].read_bytes())
        bald = feature_from_bytes(paths["bald"].read_bytes())
        m_bald = load_mask(paths["m_bald"])
        return PrecomputedSource(w_src=w, f_src=fs.f7, f_bald=bald, m_bald=m_bald)

    def create_session(self, image_bytes: bytes, role: str = "source") -> str:
        self.store.evict_expired()
        try:
            image_from_png_bytes(image_bytes)
        except Exception as exc:
            raise ValidationError(f"undecodable image payload: {exc}") from exc
        sid = self.store.create(image_bytes, role)
        job = Job(id=uuid.uuid4().hex, session_id=sid, kind="precompute")
        with self._jobs_lock:
            self.jobs[job.id] = job
        self.store.set_precompute(sid, "queued")
        self.queue.put(job)
        return sid

    def submit_edit(self, sid: str, recipe: dict) -> str:
        session = self.store.get(sid)
        if session is None:
            raise KeyError(sid)
        if session["precompute"] != "done":
            raise BlockingIOError("precompute pending")
        req = recipe_to_request(
            recipe, base_dir=self.store.data_dir, resolve_session=self._resolve_session_image
        )
        del req  # validation only; the worker rebuilds it
        job = Job(id=uuid.uuid4().hex, session_id=sid, kind="edit", payload=recipe)
        with self._jobs_lock:
            self.jobs[job.id] = job
        try:
            self.queue.put_nowait(job)
        except queue.Full as exc:
            with self._jobs_lock:
                del self.jobs[job.id]
            raise BlockingIOError("job queue full") from exc
        return job.id


def create_app(service: EngineService) -> FastAPI:
    app = FastAPI(title="hairblend service")
    app.state.service = service

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.get("/schema/edit_request")
    def edit_request_schema():
        return schema()

    @app.post("/sessions")
    async def create_session(image: UploadFile, role: str = "source"):
        payload = await image.read()
        try:
            sid = service.create_session(payload, role)
        except ValidationError as exc:
            raise HTTPException(status_code=400, detail=str(exc)) from exc
        return {"id": sid}

    @app.get("/sessions/{sid}")
    def get_session(sid: str):
        session = service.store.get(sid)
        if session is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return session

    @app.post("/sessions/{sid}/edits")
    async def submit_edit(sid: str, request: Request):
        recipe = await request.json()
        try:
            job_id = service.submit_edit(sid, recipe)
        except KeyError as exc:
            raise HTTPException(status_code=404, detail="unknown session") from exc
        except BlockingIOError as exc:
            return JSONResponse(
                status_code=503, content={"detail": str(exc)}, headers={"Retry-After": "1"}
            )
        except (ValidationError, HairblendError) as exc:
            raise HTTPException(status_code=422, detail=str(exc)) from exc
        return {"job": job_id}

    @app.get("/jobs/{job_id}")
    def job_status(job_id: str):
        job = service.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        return job.status_dict()

    @app.get("/jobs/{job_id}/result")
    def job_result(job_id: str):
        job = service.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")
        if job.state != "done" or job.result_path is None:
            return JSONResponse(status_code=409, content=job.status_dict())
        return Response(content=Path(job.result_path).read_bytes(), media_type="image/png")

    @app.get("/jobs/{job_id}/events")
    def job_events(job_id: str):
        job = service.jobs.get(job_id)
        if job is None:
            raise HTTPException(status_code=404, detail="unknown job")

        def stream():
            idx = 0
            while True:
                with job.cond:
                    while idx >= len(job.events) and job.state not in ("done", "failed"):
                        job.cond.wait(timeout=5.0)
                    chunk = job.events[idx:]
                    idx += len(chunk)
                for event in chunk:
                    yield f"data: {json.dumps(event)}\n\n"
                if job.state in ("done", "failed") and idx >= len(job.events):
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app
