import io
import json
import time

import pytest
import torch
from fastapi.testclient import TestClient

from hairblend import toy_context
from hairblend.core import LatentWPlus
from hairblend.inversion import InversionConfig
from hairblend.pipeline import OptimizationBudgets
from hairblend.serialization import image_to_png_bytes
from hairblend.service import EngineService, create_app


@pytest.fixture(scope="module")
def service(tmp_path_factory):
    ctx = toy_context(
        seed=1,
        inversion=InversionConfig(steps=12, fs_steps=6),
        budgets=OptimizationBudgets(text_steps=12, ref_steps=12, color_steps=15, blend_steps=10),
    )
    svc = EngineService(ctx, tmp_path_factory.mktemp("svc-data"), queue_limit=4, ttl_hours=24.0)
    yield svc
    svc.shutdown(drain=False)


@pytest.fixture(scope="module")
def client(service):
    return TestClient(create_app(service))


@pytest.fixture(scope="module")
def src_png(service):
    gen = service.ctx.gen
    img = gen.synthesize(LatentWPlus.broadcast(gen.sample_random_latent(5)))
    return image_to_png_bytes(img)


def wait_for_precompute(client, sid, timeout=60.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        state = client.get(f"/sessions/{sid}").json()["precompute"]
        if state == "done":
            return
        time.sleep(0.1)
    raise TimeoutError("precompute did not finish")


def wait_for_job(client, job_id, timeout=120.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        payload = client.get(f"/jobs/{job_id}").json()
        if payload["state"] in ("done", "failed"):
            return payload
        time.sleep(0.1)
    raise TimeoutError("job did not finish")


TEXT_RECIPE = {"hairstyle": {"type": "text", "text": "bob"}}


class TestSessions:
    def test_create_and_status(self, client, src_png):
        resp = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")})
        assert resp.status_code == 200
        sid = resp.json()["id"]
        wait_for_precompute(client, sid)
        payload = client.get(f"/sessions/{sid}").json()
        assert payload["precompute"] == "done"
        assert payload["history"] == []

    def test_corrupt_payload_rejected(self, client):
        resp = client.post("/sessions", files={"image": ("a.png", b"not a png", "image/png")})
        assert resp.status_code == 400

    def test_duplicate_uploads_distinct_sessions(self, client, src_png):
        a = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        b = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        assert a != b

    def test_unknown_session_404(self, client):
        assert client.get("/sessions/zzz").status_code == 404


class TestEdits:
    def test_style_only_edit_completes(self, client, src_png):
        sid = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        wait_for_precompute(client, sid)
        job = client.post(f"/sessions/{sid}/edits", json=TEXT_RECIPE).json()["job"]
        payload = wait_for_job(client, job)
        assert payload["state"] == "done"
        result = client.get(f"/jobs/{job}/result")
        assert result.status_code == 200
        assert result.headers["content-type"] == "image/png"
        assert result.content[:8] == b"\x89PNG\r\n\x1a\n"
        assert "report" in payload

    def test_empty_request_validation_error(self, client, src_png):
        sid = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        wait_for_precompute(client, sid)
        resp = client.post(f"/sessions/{sid}/edits", json={})
        assert resp.status_code == 422

    def test_unknown_session_rejected(self, client):
        assert client.post("/sessions/zzz/edits", json=TEXT_RECIPE).status_code == 404

    def test_result_before_done_returns_status(self, client, src_png):
        sid = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        wait_for_precompute(client, sid)
        job = client.post(f"/sessions/{sid}/edits", json=TEXT_RECIPE).json()["job"]
        resp = client.get(f"/jobs/{job}/result")
        if resp.status_code == 409:  # still running
            assert resp.json()["state"] in ("queued", "running")
        wait_for_job(client, job)

    def test_unknown_job_404(self, client):
        assert client.get("/jobs/zzz").status_code == 404
        assert client.get("/jobs/zzz/result").status_code == 404

    def test_two_jobs_same_session_history_ordered(self, client, src_png):
        sid = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        wait_for_precompute(client, sid)
        j1 = client.post(f"/sessions/{sid}/edits", json=TEXT_RECIPE).json()["job"]
        j2 = client.post(
            f"/sessions/{sid}/edits", json={"color": {"type": "rgb", "rgb": [0.2, 0.25, 0.2]}}
        ).json()["job"]
        wait_for_job(client, j1)
        wait_for_job(client, j2)
        history = client.get(f"/sessions/{sid}").json()["history"]
        assert [h["job"] for h in history] == [j1, j2]
        assert history[0]["completed"] <= history[1]["completed"]

    def test_cache_coherence_across_edits(self, service, client, src_png):
        sid = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        wait_for_precompute(client, sid)
        pre1 = service.cached_inversion(sid)
        j = client.post(f"/sessions/{sid}/edits", json=TEXT_RECIPE).json()["job"]
        wait_for_job(client, j)
        pre2 = service.cached_inversion(sid)
        assert torch.equal(pre1.w_src.layers, pre2.w_src.layers)
        assert torch.equal(pre1.f_bald.data, pre2.f_bald.data)


class TestEvents:
    def test_event_stream_order_and_progress(self, client, src_png):
        sid = client.post("/sessions", files={"image": ("a.png", src_png, "image/png")}).json()["id"]
        wait_for_precompute(client, sid)
        job = client.post(f"/sessions/{sid}/edits", json=TEXT_RECIPE).json()["job"]
        events = []
        with client.stream("GET", f"/jobs/{job}/events") as resp:
            for line in resp.iter_lines():
                if line.startswith("data: "):
                    events.append(json.loads(line[len("data: ") :]))
        states = [e for e in events if e["type"] == "state"]
        assert states[0]["state"] == "running"
        assert states[-1]["state"] == "done"
        prog = [e for e in events if e["type"] == "progress"]
        assert prog, "expected progress events"
        per_stage = {}
        for e in prog:
            per_stage.setdefault(e["stage"], []).append(e["step"])
        for steps in per_stage.values():
            assert steps == sorted(steps)

    def test_schema_endpoint(self, client):
        payload = client.get("/schema/edit_request").json()
        assert payload["title"] == "EditRequest"

    def test_health(self, client):
        assert client.get("/health").json() == {"status": "ok"}
