"""HTTP service exposing planning, generation, evaluation, and surveys as
jobs over a filesystem store. All model access goes through the configured
backends; the default configuration is fully offline with deterministic
mocks. Job states move Queued -> Running -> Done | Failed only; jobs found
mid-flight at startup are marked Failed (interrupted)."""

from __future__ import annotations

import dataclasses
import json
import logging
import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Request, Response
from fastapi.responses import JSONResponse

from . import evaluation as ev
from .backends import BackendError, HashEmbeddingBackend
from .generation import MockImageGenBackend, generate_keyframes
from .planning import PromptStrategy, plan_scene
from .samples import synthetic_plan, synthetic_plan_corpus
from .script import ScenePlan, serialize_script, validate
from .sheets import LayoutSpec
from .store import Store, new_ulid

log = logging.getLogger("cinestudio.service")

JOB_KINDS = ("plan", "generate", "evaluate", "dataset_export")
JOB_STATES = ("queued", "running", "done", "failed")


@dataclass
class ServiceConfig:
    store_root: str = "./store"
    backend_mode: str = "mock"  # mock | live
    workers: int = 2
    layout: LayoutSpec = field(default_factory=LayoutSpec)
    base_width: int = 464
    chat_endpoint: str | None = None
    chat_model: str | None = None
    image_endpoint: str | None = None
    embedding_endpoint: str | None = None
    api_token: str | None = None
    ui_dir: str | None = None
    # test hook: mock render sleeps this long, so crash tests can land a kill
    # while a generate job is mid-flight
    mock_render_delay: float = 0.0

    @classmethod
    def from_file(cls, path: str | None = None, env: dict | None = None) -> "ServiceConfig":
        data: dict[str, Any] = {}
        if path:
            import tomllib

            with open(path, "rb") as fh:
                raw = tomllib.load(fh)
            for section in raw.values() if all(isinstance(v, dict) for v in raw.values()) else [raw]:
                data.update(section)
        env = env if env is not None else dict(os.environ)
        for key in (
            "store_root", "backend_mode", "chat_endpoint", "chat_model",
            "image_endpoint", "embedding_endpoint", "api_token", "ui_dir",
        ):
            env_key = f"CINESTUDIO_{key.upper()}"
            if env_key in env:
                data[key] = env[env_key]
        for key in ("workers", "base_width"):
            env_key = f"CINESTUDIO_{key.upper()}"
            if env_key in env:
                data[key] = int(env[env_key])
        if "CINESTUDIO_MOCK_RENDER_DELAY" in env:
            data["mock_render_delay"] = float(env["CINESTUDIO_MOCK_RENDER_DELAY"])
        if "layout" in data and isinstance(data["layout"], dict):
            data["layout"] = LayoutSpec.from_json_dict(data["layout"])
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in data.items() if k in known})


class _DelayedMockImageBackend(MockImageGenBackend):
    def __init__(self, delay: float, **kwargs):
        super().__init__(**kwargs)
        self.delay = delay

    def render(self, prompt, width, height, seed):
        if self.delay > 0:
            time.sleep(self.delay)
        return super().render(prompt, width, height, seed)


class Service:
    def __init__(self, config: ServiceConfig):
        self.config = config
        self.store = Store(config.store_root)
        self.executor = ThreadPoolExecutor(max_workers=config.workers)
        self._idempotency: dict[str, str] = {}
        self._build_backends()
        self._recover_jobs()

    def _build_backends(self) -> None:
        cfg = self.config
        if cfg.backend_mode == "live":
            from .backends import HttpChatBackend, HttpEmbeddingBackend, HttpImageGenBackend

            if not (cfg.chat_endpoint and cfg.chat_model and cfg.image_endpoint):
                raise ValueError("live mode needs chat_endpoint, chat_model, and image_endpoint")
            self.chat = HttpChatBackend(cfg.chat_endpoint, cfg.chat_model, token=cfg.api_token)
            self.imagegen = HttpImageGenBackend(cfg.image_endpoint, token=cfg.api_token)
            self.embedder = (
                HttpEmbeddingBackend(cfg.embedding_endpoint, token=cfg.api_token)
                if cfg.embedding_endpoint
                else HashEmbeddingBackend()
            )
        else:
            self.chat = _MockPlannerChat()
            self.imagegen = _DelayedMockImageBackend(cfg.mock_render_delay, layout=cfg.layout)
            self.embedder = HashEmbeddingBackend()

    # --- jobs ---

    def _job_path(self, job_id: str) -> str:
        return f"jobs/{job_id}.json"

    def _write_job(self, job: dict) -> None:
        job["updated_at"] = time.time()
        with self.store.lock(job["id"]):
            self.store.write_json(self._job_path(job["id"]), job)

    def load_job(self, job_id: str) -> dict | None:
        if not self.store.exists(self._job_path(job_id)):
            return None
        return self.store.read_json(self._job_path(job_id))

    def _recover_jobs(self) -> None:
        jobs_dir = self.store.root / "jobs"
        for path in jobs_dir.glob("*.json"):
            try:
                job = json.loads(path.read_text(encoding="utf-8"))
            except json.JSONDecodeError:
                # unreachable with atomic writes; surface loudly if it happens
                log.error("corrupt job file %s", path)
                continue
            if job.get("state") in ("queued", "running"):
                job["state"] = "failed"
                job["error"] = "interrupted by service restart; resubmit to retry"
                self._write_job(job)
                log.info(json.dumps({"event": "job_recovered_failed", "job": job["id"]}))
            key = job.get("idempotency_key")
            if key:
                self._idempotency[key] = job["id"]

    def submit_job(self, kind: str, inputs: dict, runner, idempotency_key: str | None = None) -> str:
        if idempotency_key and idempotency_key in self._idempotency:
            return self._idempotency[idempotency_key]
        job_id = new_ulid()
        job = {
            "id": job_id,
            "kind": kind,
            "state": "queued",
            "inputs": inputs,
            "outputs": None,
            "error": None,
            "idempotency_key": idempotency_key,
            "created_at": time.time(),
            "updated_at": time.time(),
        }
        if idempotency_key:
            self._idempotency[idempotency_key] = job_id
        self._write_job(job)
        log.info(json.dumps({"event": "job_queued", "job": job_id, "kind": kind}))

        def run():
            job["state"] = "running"
            self._write_job(job)
            log.info(json.dumps({"event": "job_running", "job": job_id}))
            try:
                job["outputs"] = runner(job_id)
                job["state"] = "done"
            except Exception as exc:  # noqa: BLE001 - job errors become data
                job["state"] = "failed"
                job["error"] = f"{type(exc).__name__}: {exc}"
            self._write_job(job)
            log.info(json.dumps({"event": f"job_{job['state']}", "job": job_id}))

        self.executor.submit(run)
        return job_id

    # --- job runners ---

    def run_plan(self, job_id: str, scene_description: str, strategy: str) -> dict:
        outcome = plan_scene(
            scene_description,
            PromptStrategy(strategy),
            exemplars=None,
            backend=self.chat,
        )
        plan_dict = outcome.plan.to_json_dict()
        self.store.write_json(f"plans/{job_id}.json", plan_dict)
        return {"plan_id": job_id, "repair_attempts": outcome.repair_attempts}

    def run_generate(self, job_id: str, plan_id: str, seed: int, base_width: int) -> dict:
        plan = ScenePlan.from_json_dict(self.store.read_json(f"plans/{plan_id}.json"))
        result = generate_keyframes(
            plan, self.imagegen, layout=self.config.layout, base_width=base_width, seed=seed
        )
        scene_dir = self.store.root / "scenes" / job_id
        (scene_dir / "frames").mkdir(parents=True, exist_ok=True)
        import io

        from PIL import Image as PILImage

        def png_bytes(img):
            buf = io.BytesIO()
            PILImage.fromarray(img, mode="RGB").save(buf, format="PNG")
            return buf.getvalue()

        self.store.write_bytes(f"scenes/{job_id}/sheet.png", png_bytes(result.sheet.image))
        frame_urls = []
        for k, frame in enumerate(result.frames, start=1):
            self.store.write_bytes(f"scenes/{job_id}/frames/{k}.png", png_bytes(frame))
            frame_urls.append(f"/scenes/{job_id}/frames/{k}.png")
        meta = {
            "plan_id": plan_id,
            "seed": seed,
            "count_ok": result.count_ok,
            "frame_count": len(result.frames),
            "planned_shots": len(plan.shots),
            "cut_rows": list(result.boundary.cut_rows),
            "sheet_url": f"/scenes/{job_id}/sheet.png",
            "frame_urls": frame_urls,
        }
        self.store.write_json(f"scenes/{job_id}/result.json", meta)
        return meta

    def run_evaluation(self, job_id: str, kind: str, params: dict) -> dict:
        if kind == "count_bench":
            trials = int(params.get("trials", 5))
            fault = float(params.get("fault", 0.0))
            mode = params.get("mode", "checker")
            from .generation import FaultConfig

            backend = MockImageGenBackend(
                layout=self.config.layout,
                fault_config=FaultConfig(missing_border_rate=fault, rng_seed=int(params.get("rng_seed", 0))),
                bordered=(mode == "checker"),
                texture_amplitude=int(params.get("texture_amplitude", 8)),
            )
            table = ev.frame_count_benchmark(
                synthetic_plan_corpus(range(3, 11), trials),
                backend,
                layout=self.config.layout,
                base_width=self.config.base_width,
                seed=int(params.get("seed", 0)),
                mode=mode,
            )
            report = {
                "kind": kind,
                "mode": table.mode,
                "rows": [dataclasses.asdict(r) for r in table.rows],
            }
            self.store.write_json(f"reports/{job_id}.json", report)
            self.store.write_bytes(f"reports/{job_id}.csv", ev.benchmark_to_csv(table).encode())
            return {"report_id": job_id}
        if kind in ("align", "consistency"):
            scene_id = params["scene_id"]
            meta = self.store.read_json(f"scenes/{scene_id}/result.json")
            from .sheets import load_png

            frames = [
                load_png(self.store.root / "scenes" / scene_id / "frames" / f"{k}.png")
                for k in range(1, meta["frame_count"] + 1)
            ]
            plan = ScenePlan.from_json_dict(self.store.read_json(f"plans/{meta['plan_id']}.json"))
            if kind == "align":
                texts = [s.description for s in plan.shots][: len(frames)]
                rep = ev.clip_alignment(frames, texts, self.embedder, character_count=len(plan.characters))
                report = {
                    "kind": kind,
                    "per_shot": list(rep.per_shot),
                    "mean": rep.mean,
                    "character_count_bucket": rep.character_count_bucket,
                }
            else:
                report = {"kind": kind, "score": ev.consistency_score(frames, self.embedder)}
            self.store.write_json(f"reports/{job_id}.json", report)
            return {"report_id": job_id}
        raise ValueError(f"unknown evaluation kind {kind!r}")


class _MockPlannerChat:
    """Offline planner: deterministically emits a valid script for any
    request, sized by a hash of the description."""

    def complete(self, messages) -> str:
        desc = ""
        for m in reversed(messages):
            if m.get("role") == "user":
                desc = str(m.get("content", ""))
                break
        import hashlib

        h = hashlib.sha256(desc.encode()).digest()
        n = 3 + h[0] % 6
        plan = synthetic_plan(n, tag=h.hex()[:8])
        plan = dataclasses.replace(plan, scene_description=desc[:200] or "scene")
        return serialize_script(plan)


def create_app(config: ServiceConfig | None = None, service: Service | None = None) -> FastAPI:
    svc = service or Service(config or ServiceConfig())
    app = FastAPI(title="cinestudio")
    app.state.service = svc

    def error(status: int, message: str, code: str = "error"):
        return JSONResponse(status_code=status, content={"error": code, "message": message})

    @app.get("/healthz")
    def healthz():
        return {"status": "ok"}

    @app.get("/jobs/{job_id}")
    def get_job(job_id: str):
        job = svc.load_job(job_id)
        if job is None:
            return error(404, f"unknown job {job_id}", "not_found")
        return job

    @app.post("/plans", status_code=202)
    async def post_plan(request: Request):
        body = await request.json()
        desc = body.get("scene_description", "")
        if not isinstance(desc, str) or not desc.strip():
            return error(422, "scene_description must be a non-empty string", "validation")
        strategy = body.get("strategy", "instruction")
        if strategy not in [s.value for s in PromptStrategy]:
            return error(422, f"unknown strategy {strategy!r}", "validation")
        try:
            job_id = svc.submit_job(
                "plan",
                {"scene_description": desc, "strategy": strategy},
                lambda jid: svc.run_plan(jid, desc, strategy),
                idempotency_key=body.get("idempotency_key"),
            )
        except BackendError as exc:
            return error(503, str(exc), "backend_unavailable")
        return {"job_id": job_id}

    @app.get("/plans/{plan_id}")
    def get_plan(plan_id: str):
        if not svc.store.exists(f"plans/{plan_id}.json"):
            return error(404, f"unknown plan {plan_id}", "not_found")
        return svc.store.read_json(f"plans/{plan_id}.json")

    @app.put("/plans/{plan_id}")
    async def put_plan(plan_id: str, request: Request):
        if not svc.store.exists(f"plans/{plan_id}.json"):
            return error(404, f"unknown plan {plan_id}", "not_found")
        body = await request.json()
        try:
            plan = ScenePlan.from_json_dict(body)
        except (KeyError, ValueError, TypeError) as exc:
            return error(422, f"malformed plan JSON: {exc}", "validation")
        from .script import resolve_characters

        plan = resolve_characters(plan)
        violations = validate(plan)
        if violations:
            return JSONResponse(
                status_code=422,
                content={
                    "error": "validation",
                    "violations": [
                        {"rule": v.rule, "field": v.field, "message": v.message} for v in violations
                    ],
                },
            )
        with svc.store.lock(plan_id):
            svc.store.write_json(f"plans/{plan_id}.json", plan.to_json_dict())
        return plan.to_json_dict()

    @app.post("/plans/{plan_id}/generate", status_code=202)
    async def post_generate(plan_id: str, request: Request):
        if not svc.store.exists(f"plans/{plan_id}.json"):
            return error(404, f"unknown plan {plan_id}", "not_found")
        body = await request.json() if await request.body() else {}
        seed = int(body.get("seed", 0))
        base_width = int(body.get("base_width", svc.config.base_width))
        job_id = svc.submit_job(
            "generate",
            {"plan_id": plan_id, "seed": seed, "base_width": base_width},
            lambda jid: svc.run_generate(jid, plan_id, seed, base_width),
            idempotency_key=body.get("idempotency_key"),
        )
        return {"job_id": job_id}

    @app.get("/scenes/{scene_id}/result.json")
    def get_scene_result(scene_id: str):
        if not svc.store.exists(f"scenes/{scene_id}/result.json"):
            return error(404, f"unknown scene {scene_id}", "not_found")
        return svc.store.read_json(f"scenes/{scene_id}/result.json")

    @app.get("/scenes/{scene_id}/sheet.png")
    def get_sheet(scene_id: str):
        if not svc.store.exists(f"scenes/{scene_id}/sheet.png"):
            return error(404, f"unknown scene {scene_id}", "not_found")
        return Response(content=svc.store.read_bytes(f"scenes/{scene_id}/sheet.png"), media_type="image/png")

    @app.get("/scenes/{scene_id}/frames/{k}.png")
    def get_frame(scene_id: str, k: int):
        rel = f"scenes/{scene_id}/frames/{k}.png"
        if not svc.store.exists(rel):
            return error(404, f"no frame {k} for scene {scene_id}", "not_found")
        return Response(content=svc.store.read_bytes(rel), media_type="image/png")

    @app.post("/evaluations", status_code=202)
    async def post_evaluation(request: Request):
        body = await request.json()
        kind = body.get("kind")
        if kind not in ("align", "consistency", "count_bench", "judge"):
            return error(422, f"unknown evaluation kind {kind!r}", "validation")
        if kind == "judge":
            return error(422, "judge evaluations need a live judge backend; use the CLI with scripted replies", "validation")
        params = {k: v for k, v in body.items() if k not in ("kind", "idempotency_key")}
        job_id = svc.submit_job(
            "evaluate",
            {"kind": kind, **params},
            lambda jid: svc.run_evaluation(jid, kind, params),
            idempotency_key=body.get("idempotency_key"),
        )
        return {"job_id": job_id}

    @app.get("/reports/{report_id}")
    def get_report(report_id: str):
        if not svc.store.exists(f"reports/{report_id}.json"):
            return error(404, f"unknown report {report_id}", "not_found")
        return svc.store.read_json(f"reports/{report_id}.json")

    @app.post("/surveys", status_code=201)
    async def post_survey(request: Request):
        body = await request.json()
        scene_ids = body.get("scene_ids") or []
        if not scene_ids:
            return error(422, "scene_ids must be non-empty", "validation")
        items = ev.build_survey(
            scene_ids,
            body.get("ours_method", "ours"),
            body.get("baseline_method", "baseline"),
            rng_seed=int(body.get("rng_seed", 0)),
            time_limit_seconds=float(body.get("time_limit_seconds", ev.DEFAULT_TIME_LIMIT_SECONDS)),
        )
        survey_id = new_ulid()
        svc.store.write_json(
            f"surveys/{survey_id}/survey.json",
            {
                "survey_id": survey_id,
                "ours_method": body.get("ours_method", "ours"),
                "items": [item.to_json_dict() for item in items],
            },
        )
        return {"survey_id": survey_id, "item_count": len(items)}

    def _load_survey(survey_id: str):
        if not svc.store.exists(f"surveys/{survey_id}/survey.json"):
            return None
        return svc.store.read_json(f"surveys/{survey_id}/survey.json")

    def _survey_responses(survey_id: str) -> list[dict]:
        return [json.loads(ln) for ln in svc.store.read_lines(f"surveys/{survey_id}/responses.jsonl")]

    @app.get("/surveys/{survey_id}/next")
    def survey_next(survey_id: str):
        survey = _load_survey(survey_id)
        if survey is None:
            return error(404, f"unknown survey {survey_id}", "not_found")
        answered = {r["item_id"] for r in _survey_responses(survey_id)}
        for item in survey["items"]:
            if item["item_id"] not in answered:
                return item
        return JSONResponse(status_code=200, content={"done": True})

    @app.post("/surveys/{survey_id}/responses", status_code=201)
    async def survey_respond(survey_id: str, request: Request):
        survey = _load_survey(survey_id)
        if survey is None:
            return error(404, f"unknown survey {survey_id}", "not_found")
        body = await request.json()
        item_ids = {item["item_id"] for item in survey["items"]}
        if body.get("item_id") not in item_ids:
            return error(422, f"unknown item {body.get('item_id')!r}", "validation")
        answered = {r["item_id"] for r in _survey_responses(survey_id)}
        if body["item_id"] in answered:
            return error(409, f"item {body['item_id']} already answered", "conflict")
        svc.store.append_line(
            f"surveys/{survey_id}/responses.jsonl",
            json.dumps(
                {
                    "item_id": body["item_id"],
                    "choice": body.get("choice"),
                    "elapsed_seconds": body.get("elapsed_seconds"),
                }
            ),
        )
        return {"recorded": True}

    @app.get("/surveys/{survey_id}/tally")
    def survey_tally(survey_id: str):
        survey = _load_survey(survey_id)
        if survey is None:
            return error(404, f"unknown survey {survey_id}", "not_found")
        items = [
            ev.SurveyItem(
                item_id=i["item_id"],
                scene_id=i["scene_id"],
                left_method=i["left_method"],
                right_method=i["right_method"],
                aspect=ev.SurveyAspect(i["aspect"]),
                time_limit_seconds=i["time_limit_seconds"],
            )
            for i in survey["items"]
        ]
        tally = ev.tally_survey(items, _survey_responses(survey_id), survey["ours_method"])
        return {
            "per_aspect": {a: {"wins_ours": w, "total": t} for a, (w, t) in tally.per_aspect.items()},
            "percentages": tally.percentages(),
            "abstentions": tally.abstentions,
        }

    ui_dir = svc.config.ui_dir
    if ui_dir and Path(ui_dir).is_dir():
        from fastapi.staticfiles import StaticFiles

        app.mount("/ui", StaticFiles(directory=ui_dir, html=True), name="ui")

    return app


def main():  # pragma: no cover - exercised via the CLI
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser()
    parser.add_argument("--addr", default="127.0.0.1:8000")
    parser.add_argument("--config", default=None)
    args = parser.parse_args()
    host, _, port = args.addr.partition(":")
    app = create_app(ServiceConfig.from_file(args.config))
    uvicorn.run(app, host=host, port=int(port or 8000))


if __name__ == "__main__":  # pragma: no cover
    main()
