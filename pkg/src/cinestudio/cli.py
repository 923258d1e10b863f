"""Command-line front door for every pipeline stage. Every path runs fully
offline in mock mode; --seed pins all randomized outputs.

Exit codes: 1 usage, 2 validation, 3 backend, 4 io. With --json, errors are
emitted as one JSON object on stderr."""

from __future__ import annotations

import functools
import json
import sys
import time
from pathlib import Path

import click

from . import evaluation as ev
from .backends import BackendError, HashEmbeddingBackend, ScriptedJudgeBackend
from .dataset import (
    DatasetError,
    apply_refinement,
    balance_by_shot_count,
    export_training_pairs,
    filter_multishot,
    read_records,
    write_manifest,
    write_records,
)
from .generation import (
    FaultConfig,
    MockImageGenBackend,
    generate_keyframes,
)
from .planning import PlanningError, PromptStrategy, Exemplar, plan_scene
from .samples import synthetic_plan_corpus
from .script import InvalidPlanError, ScriptError, parse_script, serialize_script
from .service import _MockPlannerChat
from .sheets import (
    LayoutSpec,
    Sheet,
    compose_sheet,
    count_frames,
    detect_borders_checker,
    detect_borders_rowdiff,
    load_png,
    save_png,
    split_sheet,
)

click.exceptions.UsageError.exit_code = 1

EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_BACKEND = 3
EXIT_IO = 4

_STRATEGIES = {
    "g": PromptStrategy.GENERIC,
    "i": PromptStrategy.INSTRUCTION_ONLY,
    "ie": PromptStrategy.INSTRUCTION_WITH_EXEMPLARS,
}


def _fail(ctx_json: bool, code: int, kind: str, message: str):
    if ctx_json:
        sys.stderr.write(json.dumps({"error": kind, "message": message}) + "\n")
    else:
        sys.stderr.write(f"error ({kind}): {message}\n")
    sys.exit(code)


def handles_errors(fn):
    @functools.wraps(fn)
    def wrapper(*args, **kwargs):
        as_json = kwargs.get("as_json", False)
        try:
            return fn(*args, **kwargs)
        except (ScriptError, InvalidPlanError, DatasetError, ev.EvaluationError, ValueError) as exc:
            _fail(as_json, EXIT_VALIDATION, "validation", str(exc))
        except (PlanningError, BackendError) as exc:
            _fail(as_json, EXIT_BACKEND, "backend", str(exc))
        except OSError as exc:
            _fail(as_json, EXIT_IO, "io", str(exc))

    return wrapper


@click.group()
def main():
    """Cinematic scene composition pipeline."""


@main.command()
@click.argument("description")
@click.option("--strategy", type=click.Choice(["g", "i", "ie"]), default="i")
@click.option("--exemplars", "exemplars_path", type=click.Path(exists=True), default=None)
@click.option("--out", "-o", type=click.Path(), default=None, help="Write script here instead of stdout.")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def plan(description, strategy, exemplars_path, out, as_json):
    """Plan a scene from a description (offline mock planner)."""
    exemplars = None
    if exemplars_path:
        raw = json.loads(Path(exemplars_path).read_text(encoding="utf-8"))
        exemplars = [Exemplar(e["scene_description"], e["script_text"]) for e in raw]
    outcome = plan_scene(description, _STRATEGIES[strategy], exemplars, _MockPlannerChat())
    text = serialize_script(outcome.plan)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        click.echo(text, nl=False)


@main.command()
@click.argument("script_path", type=click.Path(exists=True))
@click.option("--seed", type=int, default=0)
@click.option("--width", type=int, default=464)
@click.option("--fault", type=float, default=0.0, help="Mock missing-border rate.")
@click.option("--out", "-o", type=click.Path(), default="./out")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def generate(script_path, seed, width, fault, out, as_json):
    """Generate keyframes for a script with the mock image backend."""
    plan_obj = parse_script(Path(script_path).read_text(encoding="utf-8"))
    layout = LayoutSpec()
    backend = MockImageGenBackend(layout=layout, fault_config=FaultConfig(missing_border_rate=fault, rng_seed=seed))
    result = generate_keyframes(plan_obj, backend, layout=layout, base_width=width, seed=seed)
    out_dir = Path(out)
    (out_dir / "frames").mkdir(parents=True, exist_ok=True)
    save_png(result.sheet.image, out_dir / "sheet.png")
    for k, frame in enumerate(result.frames, start=1):
        save_png(frame, out_dir / "frames" / f"{k}.png")
    meta = {
        "count_ok": result.count_ok,
        "frame_count": len(result.frames),
        "planned_shots": len(plan_obj.shots),
        "cut_rows": list(result.boundary.cut_rows),
        "seed": seed,
    }
    (out_dir / "result.json").write_text(json.dumps(meta, indent=2) + "\n", encoding="utf-8")
    click.echo(json.dumps(meta))


@main.command()
@click.argument("frames", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--out", "-o", type=click.Path(), default="sheet.png")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def compose(frames, out, as_json):
    """Compose frame PNGs into one bordered sheet."""
    layout = LayoutSpec()
    sheet = compose_sheet([load_png(p) for p in frames], layout)
    save_png(sheet.image, out)
    click.echo(f"{out}: {sheet.image.shape[1]}x{sheet.image.shape[0]}, {len(frames)} frames")


@main.command()
@click.argument("sheet_path", type=click.Path(exists=True))
@click.option("--method", type=click.Choice(["checker", "rowdiff"]), default="checker")
@click.option("--expect", type=int, default=None, help="Expected frame count (rowdiff only).")
@click.option("--out", "-o", type=click.Path(), default="./frames")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def split(sheet_path, method, expect, out, as_json):
    """Split a sheet back into frame PNGs."""
    sheet = Sheet(image=load_png(sheet_path), layout=LayoutSpec())
    if method == "checker":
        report = detect_borders_checker(sheet)
    else:
        if expect is None:
            raise ValueError("--expect N is required with --method rowdiff")
        report = detect_borders_rowdiff(sheet, expect)
    frames = split_sheet(sheet, report)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    for k, frame in enumerate(frames, start=1):
        save_png(frame, out_dir / f"{k}.png")
    click.echo(f"{len(frames)} frames -> {out_dir}")


@main.command()
@click.argument("sheet_path", type=click.Path(exists=True))
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def count(sheet_path, as_json):
    """Count frames in a bordered sheet."""
    click.echo(count_frames(Sheet(image=load_png(sheet_path), layout=LayoutSpec())))


@main.group()
def eval():
    """Evaluation harnesses."""


@eval.command("align")
@click.option("--frames", "frames_dir", type=click.Path(exists=True), required=True)
@click.option("--script", "script_path", type=click.Path(exists=True), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def eval_align(frames_dir, script_path, as_json):
    """Text-image alignment with the deterministic hash embedder."""
    plan_obj = parse_script(Path(script_path).read_text(encoding="utf-8"))
    paths = sorted(Path(frames_dir).glob("*.png"), key=lambda p: int(p.stem))
    frames = [load_png(p) for p in paths]
    report = ev.clip_alignment(
        frames,
        [s.description for s in plan_obj.shots][: len(frames)],
        HashEmbeddingBackend(),
        character_count=len(plan_obj.characters),
    )
    click.echo(json.dumps({"per_shot": list(report.per_shot), "mean": report.mean,
                           "character_count_bucket": report.character_count_bucket}))


@eval.command("consistency")
@click.option("--frames", "frames_dir", type=click.Path(exists=True), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def eval_consistency(frames_dir, as_json):
    paths = sorted(Path(frames_dir).glob("*.png"), key=lambda p: int(p.stem))
    frames = [load_png(p) for p in paths]
    click.echo(json.dumps({"score": ev.consistency_score(frames, HashEmbeddingBackend())}))


@eval.command("count-bench")
@click.option("--trials", type=int, default=5)
@click.option("--fault", type=float, default=0.0)
@click.option("--mode", type=click.Choice(["checker", "rowdiff"]), default="checker")
@click.option("--seed", type=int, default=0)
@click.option("--texture", type=int, default=8)
@click.option("--out", "-o", type=click.Path(), default=None, help="Write markdown + CSV next to this stem.")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def eval_count_bench(trials, fault, mode, seed, texture, out, as_json):
    """Frame-count accuracy over a mock corpus, shot counts 3..10."""
    backend = MockImageGenBackend(
        fault_config=FaultConfig(missing_border_rate=fault, rng_seed=seed),
        bordered=(mode == "checker"),
        texture_amplitude=texture,
    )
    table = ev.frame_count_benchmark(
        synthetic_plan_corpus(range(3, 11), trials), backend, seed=seed, mode=mode
    )
    md = ev.benchmark_to_markdown(table)
    if out:
        Path(str(out) + ".md").write_text(md, encoding="utf-8")
        Path(str(out) + ".csv").write_text(ev.benchmark_to_csv(table), encoding="utf-8")
    click.echo(md, nl=False)


@eval.command("judge")
@click.option("--pairs", "pairs_path", type=click.Path(exists=True), required=True,
              help="JSON list of {scene_id, ours: [paths], baseline: [paths]}.")
@click.option("--replies", "replies_path", type=click.Path(exists=True), required=True,
              help="JSON list of scripted judge reply texts (offline stand-in).")
@click.option("--seed", type=int, default=0)
@click.option("--out", "-o", type=click.Path(), default=None)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def eval_judge(pairs_path, replies_path, seed, out, as_json):
    """Pairwise judging with side randomization and a scripted judge."""
    raw = json.loads(Path(pairs_path).read_text(encoding="utf-8"))
    pairs = [ev.ScenePair(p["scene_id"], tuple(p["ours"]), tuple(p["baseline"])) for p in raw]
    judge = ScriptedJudgeBackend(json.loads(Path(replies_path).read_text(encoding="utf-8")))
    tally = ev.run_pairwise_judging(pairs, judge, rng_seed=seed)
    md = ev.tally_to_markdown(tally, "Pairwise judging")
    if out:
        Path(str(out) + ".md").write_text(md, encoding="utf-8")
        Path(str(out) + ".csv").write_text(ev.tally_to_csv(tally), encoding="utf-8")
    click.echo(md, nl=False)


@main.group()
def dataset():
    """Dataset construction."""


@dataset.command("filter")
@click.argument("records_path", type=click.Path(exists=True))
@click.option("--min-shots", type=int, default=2)
@click.option("--max-shots", type=int, default=10)
@click.option("--out", "-o", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def dataset_filter(records_path, min_shots, max_shots, out, as_json):
    records = filter_multishot(read_records(records_path), min_shots, max_shots)
    write_records(records, out)
    click.echo(f"{len(records)} records -> {out}")


@dataset.command("balance")
@click.argument("records_path", type=click.Path(exists=True))
@click.option("--target", type=int, required=True)
@click.option("--seed", type=int, default=0)
@click.option("--out", "-o", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def dataset_balance(records_path, target, seed, out, as_json):
    records = balance_by_shot_count(read_records(records_path), target, rng_seed=seed)
    write_records(records, out)
    click.echo(f"{len(records)} records -> {out}")


@dataset.command("enrich")
@click.argument("records_path", type=click.Path(exists=True))
@click.option("--out", "-o", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def dataset_enrich(records_path, out, as_json):
    """Apply description refinement. The offline mock keeps the text and
    records provenance; point a live chat backend here for real coref."""
    records = [apply_refinement(r, r.scene_description) for r in read_records(records_path)]
    write_records(records, out)
    click.echo(f"{len(records)} records -> {out}")


@dataset.command("export")
@click.argument("records_path", type=click.Path(exists=True))
@click.option("--out", "-o", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def dataset_export(records_path, out, as_json):
    manifest = export_training_pairs(read_records(records_path), LayoutSpec(), out)
    write_manifest(manifest, Path(out) / "manifest.json")
    click.echo(f"{len(manifest.entries)} sheets -> {out}")


@main.group()
def survey():
    """2AFC survey engine."""


@survey.command("build")
@click.option("--scenes", "scenes_path", type=click.Path(exists=True), required=True,
              help="JSON list of scene ids.")
@click.option("--ours", default="ours")
@click.option("--baseline", default="baseline")
@click.option("--seed", type=int, default=0)
@click.option("--time-limit", type=float, default=ev.DEFAULT_TIME_LIMIT_SECONDS)
@click.option("--out", "-o", type=click.Path(), required=True)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def survey_build(scenes_path, ours, baseline, seed, time_limit, out, as_json):
    scene_ids = json.loads(Path(scenes_path).read_text(encoding="utf-8"))
    items = ev.build_survey(scene_ids, ours, baseline, rng_seed=seed, time_limit_seconds=time_limit)
    Path(out).write_text(
        json.dumps({"ours_method": ours, "items": [i.to_json_dict() for i in items]}, indent=2) + "\n",
        encoding="utf-8",
    )
    click.echo(f"{len(items)} items -> {out}")


@survey.command("tally")
@click.option("--survey", "survey_path", type=click.Path(exists=True), required=True)
@click.option("--responses", "responses_path", type=click.Path(exists=True), required=True,
              help="JSON lines of {item_id, choice, elapsed_seconds}.")
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def survey_tally(survey_path, responses_path, as_json):
    data = json.loads(Path(survey_path).read_text(encoding="utf-8"))
    items = [
        ev.SurveyItem(
            item_id=i["item_id"],
            scene_id=i["scene_id"],
            left_method=i["left_method"],
            right_method=i["right_method"],
            aspect=ev.SurveyAspect(i["aspect"]),
            time_limit_seconds=i["time_limit_seconds"],
        )
        for i in data["items"]
    ]
    responses = [
        json.loads(ln)
        for ln in Path(responses_path).read_text(encoding="utf-8").splitlines()
        if ln.strip()
    ]
    tally = ev.tally_survey(items, responses, data["ours_method"])
    click.echo(ev.tally_to_markdown(tally, "Survey tally"), nl=False)


@main.command()
@click.option("--addr", default="127.0.0.1:8000")
@click.option("--config", "config_path", type=click.Path(exists=True), default=None)
def serve(addr, config_path):
    """Run the HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    host, _, port = addr.partition(":")
    app = create_app(ServiceConfig.from_file(config_path))
    uvicorn.run(app, host=host, port=int(port or 8000))


@main.group()
def bench():
    """Throughput benchmarks."""


@bench.command("codec")
@click.option("--trials", type=int, default=20)
@click.option("--json", "as_json", is_flag=True)
@handles_errors
def bench_codec(trials, as_json):
    """Round-trip and border-detection throughput."""
    import numpy as np

    layout = LayoutSpec()
    rng = np.random.default_rng(0)
    frames = [rng.integers(0, 256, (layout.frame_height, 464, 3), dtype=np.uint8) for _ in range(6)]
    t0 = time.perf_counter()
    for _ in range(trials):
        sheet = compose_sheet(frames, layout)
        split_sheet(sheet, detect_borders_checker(sheet))
    dt = time.perf_counter() - t0
    click.echo(json.dumps({
        "trials": trials,
        "seconds": dt,
        "sheets_per_second": trials / dt,
    }))


if __name__ == "__main__":  # pragma: no cover
    main()
