import json
import os
import signal
import socket
import subprocess
import sys
import time

import pytest
from fastapi.testclient import TestClient

from cinestudio.service import Service, ServiceConfig, create_app
from cinestudio.store import Store, new_ulid


@pytest.fixture()
def client(tmp_path):
    app = create_app(ServiceConfig(store_root=str(tmp_path / "store"), workers=2))
    with TestClient(app) as c:
        yield c


def wait_job(client, job_id, timeout=20.0):
    deadline = time.monotonic() + timeout
    while time.monotonic() < deadline:
        job = client.get(f"/jobs/{job_id}").json()
        if job["state"] in ("done", "failed"):
            return job
        time.sleep(0.02)
    raise TimeoutError(f"job {job_id} still {job['state']}")


# --- ulid ---


def test_ulid_shape_and_sortability():
    ids = [new_ulid() for _ in range(200)]
    assert all(len(i) == 26 for i in ids)
    assert len(set(ids)) == 200
    a = new_ulid()
    time.sleep(0.002)
    b = new_ulid()
    assert a < b  # millisecond timestamp prefix sorts


# --- store ---


def test_store_atomic_write_and_blob(tmp_path):
    store = Store(tmp_path / "s")
    store.write_json("plans/x.json", {"a": 1})
    assert store.read_json("plans/x.json") == {"a": 1}
    digest = store.put_blob(b"hello")
    assert store.get_blob(digest) == b"hello"
    assert store.put_blob(b"hello") == digest
    store.append_line("surveys/r.jsonl", "one")
    store.append_line("surveys/r.jsonl", "two")
    assert store.read_lines("surveys/r.jsonl") == ["one", "two"]


# --- endpoints ---


def test_healthz(client):
    assert client.get("/healthz").json() == {"status": "ok"}


def test_unknown_job_404(client):
    resp = client.get("/jobs/nope")
    assert resp.status_code == 404
    assert resp.json()["error"] == "not_found"


def test_plan_generate_happy_path(client):
    resp = client.post("/plans", json={"scene_description": "A heist goes wrong on a rooftop."})
    assert resp.status_code == 202
    job = wait_job(client, resp.json()["job_id"])
    assert job["state"] == "done"
    plan_id = job["outputs"]["plan_id"]

    plan = client.get(f"/plans/{plan_id}").json()
    n = len(plan["shots"])
    assert 3 <= n <= 8

    resp = client.post(f"/plans/{plan_id}/generate", json={"seed": 4})
    assert resp.status_code == 202
    job = wait_job(client, resp.json()["job_id"])
    assert job["state"] == "done"
    out = job["outputs"]
    assert out["count_ok"] is True
    assert out["frame_count"] == n

    scene_id = job["id"]
    result = client.get(f"/scenes/{scene_id}/result.json").json()
    assert result == out
    sheet = client.get(f"/scenes/{scene_id}/sheet.png")
    assert sheet.status_code == 200
    assert sheet.content[:8] == b"\x89PNG\r\n\x1a\n"
    for k in range(1, n + 1):
        frame = client.get(f"/scenes/{scene_id}/frames/{k}.png")
        assert frame.status_code == 200
    assert client.get(f"/scenes/{scene_id}/frames/{n + 1}.png").status_code == 404


def test_plan_validation_errors(client):
    assert client.post("/plans", json={"scene_description": "  "}).status_code == 422
    assert client.post("/plans", json={"scene_description": "x", "strategy": "magic"}).status_code == 422


def test_put_plan_rejects_invalid_with_violations(client):
    job_id = client.post("/plans", json={"scene_description": "A duel."}).json()["job_id"]
    plan_id = wait_job(client, job_id)["outputs"]["plan_id"]
    plan = client.get(f"/plans/{plan_id}").json()
    plan["characters"] = plan["characters"] + plan["characters"][:1]  # duplicate
    resp = client.put(f"/plans/{plan_id}", json=plan)
    assert resp.status_code == 422
    rules = {v["rule"] for v in resp.json()["violations"]}
    assert "DuplicateCharacter" in rules
    # original plan untouched
    assert client.get(f"/plans/{plan_id}").json()["characters"] == plan["characters"][:-1]


def test_put_plan_accepts_valid_edit(client):
    job_id = client.post("/plans", json={"scene_description": "A chase."}).json()["job_id"]
    plan_id = wait_job(client, job_id)["outputs"]["plan_id"]
    plan = client.get(f"/plans/{plan_id}").json()
    plan["setting"] = "a neon-lit alley"
    resp = client.put(f"/plans/{plan_id}", json=plan)
    assert resp.status_code == 200
    assert client.get(f"/plans/{plan_id}").json()["setting"] == "a neon-lit alley"


def test_idempotency_key_reuses_job(client):
    body = {"scene_description": "Same scene.", "idempotency_key": "k1"}
    a = client.post("/plans", json=body).json()["job_id"]
    b = client.post("/plans", json=body).json()["job_id"]
    assert a == b


def test_evaluation_count_bench(client):
    resp = client.post("/evaluations", json={"kind": "count_bench", "trials": 2})
    assert resp.status_code == 202
    job = wait_job(client, resp.json()["job_id"], timeout=120.0)
    assert job["state"] == "done"
    report = client.get(f"/reports/{job['outputs']['report_id']}").json()
    assert [r["shot_count"] for r in report["rows"]] == list(range(3, 11))
    assert all(r["accuracy"] == 1.0 for r in report["rows"])


def test_evaluation_align_and_consistency(client):
    job_id = client.post("/plans", json={"scene_description": "A storm."}).json()["job_id"]
    plan_id = wait_job(client, job_id)["outputs"]["plan_id"]
    gen = wait_job(client, client.post(f"/plans/{plan_id}/generate", json={}).json()["job_id"])
    scene_id = gen["id"]
    for kind, key in (("align", "mean"), ("consistency", "score")):
        job = wait_job(client, client.post("/evaluations", json={"kind": kind, "scene_id": scene_id}).json()["job_id"])
        assert job["state"] == "done"
        report = client.get(f"/reports/{job['outputs']['report_id']}").json()
        assert key in report


def test_evaluation_judge_rejected(client):
    resp = client.post("/evaluations", json={"kind": "judge"})
    assert resp.status_code == 422


def test_survey_flow(client):
    resp = client.post("/surveys", json={"scene_ids": ["s1", "s2"], "rng_seed": 3})
    assert resp.status_code == 201
    survey_id = resp.json()["survey_id"]
    assert resp.json()["item_count"] == 8

    answered = 0
    while True:
        item = client.get(f"/surveys/{survey_id}/next").json()
        if item.get("done"):
            break
        r = client.post(
            f"/surveys/{survey_id}/responses",
            json={"item_id": item["item_id"], "choice": "left", "elapsed_seconds": 5.0},
        )
        assert r.status_code == 201
        # duplicate rejected
        assert client.post(
            f"/surveys/{survey_id}/responses",
            json={"item_id": item["item_id"], "choice": "right", "elapsed_seconds": 5.0},
        ).status_code == 409
        answered += 1
    assert answered == 8
    tally = client.get(f"/surveys/{survey_id}/tally").json()
    assert sum(v["total"] for v in tally["per_aspect"].values()) == 8
    assert tally["abstentions"] == 0


def test_survey_validation(client):
    assert client.post("/surveys", json={"scene_ids": []}).status_code == 422
    assert client.get("/surveys/nope/tally").status_code == 404


def test_frame_bytes_match_store(client, tmp_path):
    job_id = client.post("/plans", json={"scene_description": "A dance."}).json()["job_id"]
    plan_id = wait_job(client, job_id)["outputs"]["plan_id"]
    gen = wait_job(client, client.post(f"/plans/{plan_id}/generate", json={}).json()["job_id"])
    scene_id = gen["id"]
    svc = client.app.state.service
    stored = svc.store.read_bytes(f"scenes/{scene_id}/frames/1.png")
    assert client.get(f"/scenes/{scene_id}/frames/1.png").content == stored


def test_service_recovers_interrupted_jobs(tmp_path):
    root = tmp_path / "store"
    store = Store(root)
    job = {
        "id": "stuckjob",
        "kind": "generate",
        "state": "running",
        "inputs": {},
        "outputs": None,
        "error": None,
        "idempotency_key": None,
        "created_at": 0,
        "updated_at": 0,
    }
    store.write_json("jobs/stuckjob.json", job)
    svc = Service(ServiceConfig(store_root=str(root)))
    recovered = svc.load_job("stuckjob")
    assert recovered["state"] == "failed"
    assert "interrupted" in recovered["error"]


# --- crash safety (kill -9 mid-generate, restart, verify store) ---


def free_port():
    with socket.socket() as s:
        s.bind(("127.0.0.1", 0))
        return s.getsockname()[1]


def crash_harness(tmp_path):
    """Kill -9 a live service mid-generate, then verify the store: no torn
    files, and a restart marks the in-flight job failed. Shared with the
    acceptance suite."""
    import httpx

    root = tmp_path / "store"
    port = free_port()
    env = dict(os.environ)
    env["CINESTUDIO_STORE_ROOT"] = str(root)
    env["CINESTUDIO_MOCK_RENDER_DELAY"] = "30"
    proc = subprocess.Popen(
        [sys.executable, "-m", "cinestudio.service", "--addr", f"127.0.0.1:{port}"],
        env=env,
        stdout=subprocess.DEVNULL,
        stderr=subprocess.DEVNULL,
    )
    base = f"http://127.0.0.1:{port}"
    try:
        deadline = time.monotonic() + 30
        while True:
            try:
                if httpx.get(f"{base}/healthz", timeout=1.0).status_code == 200:
                    break
            except httpx.HTTPError:
                if time.monotonic() > deadline:
                    raise TimeoutError("service never came up")
                time.sleep(0.1)

        job_id = httpx.post(f"{base}/plans", json={"scene_description": "Crash test."}).json()["job_id"]
        deadline = time.monotonic() + 20
        while True:
            job = httpx.get(f"{base}/jobs/{job_id}").json()
            if job["state"] == "done":
                break
            assert time.monotonic() < deadline
            time.sleep(0.05)
        plan_id = job["outputs"]["plan_id"]
        gen_job = httpx.post(f"{base}/plans/{plan_id}/generate", json={}).json()["job_id"]
        # wait for the generate job to reach running (render sleeps 30s)
        deadline = time.monotonic() + 20
        while httpx.get(f"{base}/jobs/{gen_job}").json()["state"] != "running":
            assert time.monotonic() < deadline
            time.sleep(0.05)
        proc.send_signal(signal.SIGKILL)
        proc.wait(timeout=10)
    finally:
        if proc.poll() is None:
            proc.kill()
            proc.wait()

    # every artifact on disk is fully parseable: atomic writes left no torn files
    for path in root.rglob("*.json"):
        json.loads(path.read_text())
    for path in root.rglob("*.png"):
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"

    # restart over the same store: the in-flight job is marked failed
    svc = Service(ServiceConfig(store_root=str(root)))
    return {
        "recovered": svc.load_job(gen_job),
        "plan_job": svc.load_job(job_id),
        "plan_exists": svc.store.exists(f"plans/{plan_id}.json"),
    }


@pytest.mark.slow
def test_crash_safety_subprocess(tmp_path):
    result = crash_harness(tmp_path)
    assert result["recovered"]["state"] == "failed"
    assert "interrupted" in result["recovered"]["error"]
    # the finished plan job survived intact
    assert result["plan_job"]["state"] == "done"
    assert result["plan_exists"]
