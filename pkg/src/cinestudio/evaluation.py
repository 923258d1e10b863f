"""Metrics and study protocols: text-image alignment, scene consistency,
the per-shot-count frame-count benchmark, the MLLM judge pipeline, and the
two-alternative forced-choice survey engine with tallying."""

from __future__ import annotations

import csv
import io
import re
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources as importlib_resources
from typing import Any, Sequence

import numpy as np

from .backends import EmbeddingBackend, ImageGenBackend, JudgeBackend, Message
from .generation import build_generation_prompt, target_dimensions
from .script import ScenePlan
from .sheets import (
    LayoutSpec,
    Sheet,
    detect_borders_checker,
    detect_borders_rowdiff,
    frame_count_accuracy,
)


class EvaluationError(Exception):
    pass


class MalformedVerdictError(EvaluationError):
    def __init__(self, missing_aspects: list[str]):
        self.missing_aspects = missing_aspects
        super().__init__(f"verdict missing aspects: {', '.join(missing_aspects)}")


def _check_unit(v: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-6:
        raise EvaluationError(f"backend returned non-unit vector (norm {norm})")
    return v


# --- alignment and consistency ----------------------------------------------


@dataclass(frozen=True)
class AlignmentReport:
    per_shot: tuple[float, ...]
    mean: float
    character_count_bucket: str | None = None


def character_bucket(character_count: int) -> str:
    return "3+" if character_count >= 3 else str(character_count)


def clip_alignment(
    frames: Sequence[np.ndarray],
    shot_texts: Sequence[str],
    backend: EmbeddingBackend,
    character_count: int | None = None,
) -> AlignmentReport:
    """Cosine between each frame's embedding and its shot text's embedding;
    vectors must arrive unit-normalized from the backend."""
    if len(frames) != len(shot_texts):
        raise EvaluationError(f"{len(frames)} frames vs {len(shot_texts)} texts")
    if not frames:
        raise EvaluationError("nothing to align")
    scores = tuple(
        float(np.dot(_check_unit(backend.embed_image(f)), _check_unit(backend.embed_text(t))))
        for f, t in zip(frames, shot_texts)
    )
    return AlignmentReport(
        per_shot=scores,
        mean=float(np.mean(scores)),
        character_count_bucket=None if character_count is None else character_bucket(character_count),
    )


def consistency_score(frames: Sequence[np.ndarray], backend: EmbeddingBackend) -> float:
    """Mean cosine distance (1 - cosine) over all unordered frame pairs;
    lower means the frames are more mutually similar."""
    if len(frames) < 2:
        raise EvaluationError("consistency needs at least 2 frames")
    vecs = [_check_unit(backend.embed_image(f)) for f in frames]
    dists = [
        1.0 - float(np.dot(vecs[i], vecs[j]))
        for i in range(len(vecs))
        for j in range(i + 1, len(vecs))
    ]
    return float(np.mean(dists))


# --- frame-count benchmark --------------------------------------------------


@dataclass(frozen=True)
class BenchmarkRow:
    shot_count: int
    trials: int
    accuracy: float
    position_accuracy: float


@dataclass(frozen=True)
class BenchmarkTable:
    mode: str  # "checker" or "rowdiff"
    rows: tuple[BenchmarkRow, ...]


def frame_count_benchmark(
    plans_by_count: dict[int, list[ScenePlan]],
    backend: ImageGenBackend,
    layout: LayoutSpec = LayoutSpec(),
    base_width: int = 464,
    seed: int = 0,
    mode: str = "checker",
) -> BenchmarkTable:
    """Per shot count: generate every plan, count frames, and report the
    fraction of scenes whose detected count matches the planned one.

    checker mode expects bordered sheets; rowdiff mode expects borderless
    sheets of stacked full-height frames and supplies the planned count to
    the detector. Counting is by cut cardinality; position_accuracy (cuts
    exactly at the true frame boundaries) is reported alongside for
    inspection."""
    if mode not in ("checker", "rowdiff"):
        raise ValueError(f"unknown mode {mode!r}")
    rows = []
    for n in sorted(plans_by_count):
        pairs: list[tuple[int, int]] = []
        position_hits = 0
        for i, plan in enumerate(plans_by_count[n]):
            prompt = build_generation_prompt(plan)
            if mode == "checker":
                width, height = target_dimensions(plan, layout, base_width)
                img = backend.render(prompt.text, width, height, seed + i)
                report = detect_borders_checker(Sheet(image=img, layout=layout))
                truth = [
                    k * (layout.frame_height + layout.border_thickness) + layout.frame_height
                    for k in range(n - 1)
                ]
            else:
                width, height = base_width, n * layout.frame_height
                img = backend.render(prompt.text, width, height, seed + i)
                report = detect_borders_rowdiff(Sheet(image=img, layout=layout), n)
                truth = [k * layout.frame_height - 1 for k in range(1, n)]
            pairs.append((n, 1 + len(report.cut_rows)))
            if list(report.cut_rows) == truth:
                position_hits += 1
        rows.append(
            BenchmarkRow(
                shot_count=n,
                trials=len(pairs),
                accuracy=frame_count_accuracy(pairs),
                position_accuracy=position_hits / len(pairs) if pairs else 0.0,
            )
        )
    return BenchmarkTable(mode=mode, rows=tuple(rows))


# --- MLLM judge -------------------------------------------------------------


class JudgeAspect(Enum):
    OVERALL_SCENE = "Overall Scene"
    SHOT_DETAILS = "Shot Details"
    KEY_POINTS = "Key Points"
    CHARACTER_CONSISTENCY = "Character Consistency"
    BACKGROUND_CONSISTENCY = "Background Consistency"
    ACTION_FLOW = "Action Flow"
    CAMERA_MOVEMENT = "Camera Movement"


@dataclass(frozen=True)
class JudgeVerdict:
    per_aspect_choice: dict[JudgeAspect, str]  # "A" (Sequence 1) or "B" (Sequence 2)

    def __post_init__(self):
        missing = [a.value for a in JudgeAspect if a not in self.per_aspect_choice]
        if missing:
            raise MalformedVerdictError(missing)
        for choice in self.per_aspect_choice.values():
            if choice not in ("A", "B"):
                raise ValueError(f"choice must be A or B, got {choice!r}")


def judge_instruction() -> str:
    return importlib_resources.files("cinestudio.resources").joinpath("judge_instruction.txt").read_text()


def build_judge_prompt(seq_a: Sequence[Any], seq_b: Sequence[Any]) -> list[Message]:
    """Messages for a pairwise judging call: the bundled instruction plus
    both sequences attached in order, labeled Sequence 1 and Sequence 2."""
    if not seq_a or not seq_b:
        raise EvaluationError("both sequences must be non-empty")
    return [
        {"role": "system", "content": judge_instruction()},
        {
            "role": "user",
            "content": (
                f"Sequence 1: the first {len(seq_a)} attached images, in order. "
                f"Sequence 2: the next {len(seq_b)} attached images, in order."
            ),
            "images": list(seq_a) + list(seq_b),
        },
    ]


_CHOICE_RE = re.compile(r"(?:sequence\s*)?\b([12AB])\b", re.IGNORECASE)


def parse_judge_verdict(reply: str) -> JudgeVerdict:
    """Pull the per-aspect choices out of the reply's final-answer block.
    The last '* <Aspect>: <choice>' line per aspect wins; accepted choice
    spellings are 'Sequence 1/2', '1/2', and 'A/B' (A maps to Sequence 1)."""
    choices: dict[JudgeAspect, str] = {}
    for aspect in JudgeAspect:
        pattern = re.compile(
            r"^\s*\*\s*" + re.escape(aspect.value) + r"\s*:\s*(.+?)\s*$",
            re.IGNORECASE | re.MULTILINE,
        )
        matches = pattern.findall(reply)
        for raw in reversed(matches):
            m = _CHOICE_RE.search(raw)
            if m:
                token = m.group(1).upper()
                choices[aspect] = "A" if token in ("1", "A") else "B"
                break
    missing = [a.value for a in JudgeAspect if a not in choices]
    if missing:
        raise MalformedVerdictError(missing)
    return JudgeVerdict(per_aspect_choice=choices)


def render_verdict(verdict: JudgeVerdict) -> str:
    """Emit the final-answer block in the same shape the judge instruction
    asks for; parse_judge_verdict inverts this exactly."""
    c = {a: ("Sequence 1" if verdict.per_aspect_choice[a] == "A" else "Sequence 2") for a in JudgeAspect}
    return (
        "1. Textual Alignment:\n"
        f"    * Overall Scene: {c[JudgeAspect.OVERALL_SCENE]}\n"
        f"    * Shot Details: {c[JudgeAspect.SHOT_DETAILS]}\n"
        f"    * Key Points: {c[JudgeAspect.KEY_POINTS]}\n"
        "2. Consistency:\n"
        f"    * Character Consistency: {c[JudgeAspect.CHARACTER_CONSISTENCY]}\n"
        f"    * Background Consistency: {c[JudgeAspect.BACKGROUND_CONSISTENCY]}\n"
        "3. Continuity:\n"
        f"    * Action Flow: {c[JudgeAspect.ACTION_FLOW]}\n"
        f"    * Camera Movement: {c[JudgeAspect.CAMERA_MOVEMENT]}\n"
    )


@dataclass
class PreferenceTally:
    per_aspect: dict[str, tuple[int, int]] = field(default_factory=dict)  # aspect -> (wins_ours, total)
    abstentions: int = 0

    def add(self, aspect: str, ours_won: bool) -> None:
        wins, total = self.per_aspect.get(aspect, (0, 0))
        self.per_aspect[aspect] = (wins + (1 if ours_won else 0), total + 1)

    def percentage(self, aspect: str) -> float:
        wins, total = self.per_aspect.get(aspect, (0, 0))
        if total == 0:
            raise EvaluationError(f"no responses for aspect {aspect!r}")
        return 100.0 * wins / total

    def percentages(self) -> dict[str, float]:
        return {a: self.percentage(a) for a in self.per_aspect}


def fold_six_columns(tally: PreferenceTally) -> PreferenceTally:
    """Six-column view of a seven-aspect judge tally: Key Points folds into
    Shot Details; other aspects pass through."""
    folded = PreferenceTally(abstentions=tally.abstentions)
    for aspect, (wins, total) in tally.per_aspect.items():
        target = JudgeAspect.SHOT_DETAILS.value if aspect == JudgeAspect.KEY_POINTS.value else aspect
        w, t = folded.per_aspect.get(target, (0, 0))
        folded.per_aspect[target] = (w + wins, t + total)
    return folded


@dataclass(frozen=True)
class ScenePair:
    scene_id: str
    ours: tuple[Any, ...]      # image refs for our method's sequence
    baseline: tuple[Any, ...]  # image refs for the baseline's sequence


def run_pairwise_judging(
    pairs: Sequence[ScenePair], judge: JudgeBackend, rng_seed: int = 0
) -> PreferenceTally:
    """Judge every pair with a uniformly randomized side assignment, then
    de-randomize the verdicts back to method identities. Malformed replies
    count as abstentions and leave the denominators untouched."""
    if not pairs:
        raise EvaluationError("no pairs to judge")
    rng = np.random.default_rng(rng_seed)
    tally = PreferenceTally()
    for pair in pairs:
        ours_is_first = bool(rng.integers(0, 2) == 0)
        seq1, seq2 = (pair.ours, pair.baseline) if ours_is_first else (pair.baseline, pair.ours)
        reply = judge.judge(build_judge_prompt(seq1, seq2))
        try:
            verdict = parse_judge_verdict(reply)
        except MalformedVerdictError:
            tally.abstentions += 1
            continue
        for aspect, choice in verdict.per_aspect_choice.items():
            ours_won = (choice == "A") == ours_is_first
            tally.add(aspect.value, ours_won)
    return tally


# --- 2AFC survey engine -----------------------------------------------------


class SurveyAspect(Enum):
    SCENE_ALIGNMENT = "Scene alignment"
    SHOT_ALIGNMENT = "Shot alignment"
    CHARACTER_CONSISTENCY = "Character consistency"
    SETTING_CONSISTENCY = "Setting consistency"


SURVEY_ASPECT_QUESTIONS = {
    SurveyAspect.SCENE_ALIGNMENT: (
        "Which sequence better depicts the progression and continuity of events, "
        "characters, setting, and overall storyline described in the scene description?"
    ),
    SurveyAspect.SHOT_ALIGNMENT: (
        "In which sequence does each individual shot better depict its corresponding "
        "text description, considering the characters' actions, expressions, and shot size?"
    ),
    SurveyAspect.CHARACTER_CONSISTENCY: (
        "In which sequence do the main characters' appearances (clothing, hairstyle, "
        "facial features, overall identity) remain more uniform across all shots?"
    ),
    SurveyAspect.SETTING_CONSISTENCY: (
        "In which sequence does the overall setting remain more consistent across all "
        "frames, even as the exact background or perspective changes?"
    ),
}

DEFAULT_TIME_LIMIT_SECONDS = 45.0


@dataclass(frozen=True)
class SurveyItem:
    item_id: str
    scene_id: str
    left_method: str
    right_method: str
    aspect: SurveyAspect
    time_limit_seconds: float

    def __post_init__(self):
        if self.left_method == self.right_method:
            raise ValueError("left and right methods must differ")
        if self.time_limit_seconds <= 0:
            raise ValueError("time limit must be positive")

    def to_json_dict(self) -> dict:
        return {
            "item_id": self.item_id,
            "scene_id": self.scene_id,
            "left_method": self.left_method,
            "right_method": self.right_method,
            "aspect": self.aspect.value,
            "question": SURVEY_ASPECT_QUESTIONS[self.aspect],
            "time_limit_seconds": self.time_limit_seconds,
        }


def build_survey(
    scene_ids: Sequence[str],
    ours_method: str,
    baseline_method: str,
    aspects: Sequence[SurveyAspect] = tuple(SurveyAspect),
    rng_seed: int = 0,
    time_limit_seconds: float = DEFAULT_TIME_LIMIT_SECONDS,
) -> list[SurveyItem]:
    """One item per (scene, aspect) with seeded uniform side assignment."""
    if not scene_ids:
        raise EvaluationError("no scenes")
    rng = np.random.default_rng(rng_seed)
    items = []
    for scene_id in scene_ids:
        for aspect in aspects:
            ours_left = bool(rng.integers(0, 2) == 0)
            left, right = (ours_method, baseline_method) if ours_left else (baseline_method, ours_method)
            items.append(
                SurveyItem(
                    item_id=f"{scene_id}:{aspect.name.lower()}",
                    scene_id=scene_id,
                    left_method=left,
                    right_method=right,
                    aspect=aspect,
                    time_limit_seconds=time_limit_seconds,
                )
            )
    return items


_LEFT_CHOICES = {"left", "1", "a"}
_RIGHT_CHOICES = {"right", "2", "b"}


def tally_survey(
    items: Sequence[SurveyItem],
    responses: Sequence[dict],
    ours_method: str,
) -> PreferenceTally:
    """Map each response's side choice back to the method on that side.
    Blank choices and responses over the item's time limit are excluded."""
    by_id = {item.item_id: item for item in items}
    tally = PreferenceTally()
    for resp in responses:
        item = by_id.get(resp.get("item_id"))
        if item is None:
            continue
        choice = str(resp.get("choice") or "").strip().lower()
        elapsed = resp.get("elapsed_seconds")
        if not choice or (elapsed is not None and elapsed > item.time_limit_seconds):
            tally.abstentions += 1
            continue
        if choice in _LEFT_CHOICES:
            chosen = item.left_method
        elif choice in _RIGHT_CHOICES:
            chosen = item.right_method
        else:
            tally.abstentions += 1
            continue
        tally.add(item.aspect.value, chosen == ours_method)
    return tally


# --- report rendering -------------------------------------------------------


def tally_to_markdown(tally: PreferenceTally, title: str = "Preference tally") -> str:
    lines = [f"# {title}", "", "| Aspect | Wins (ours) | Total | % Ours |", "| --- | ---: | ---: | ---: |"]
    for aspect in sorted(tally.per_aspect):
        wins, total = tally.per_aspect[aspect]
        lines.append(f"| {aspect} | {wins} | {total} | {100.0 * wins / total:.2f} |")
    lines.append("")
    lines.append(f"Abstentions: {tally.abstentions}")
    return "\n".join(lines) + "\n"


def tally_to_csv(tally: PreferenceTally) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["aspect", "wins_ours", "total", "percent_ours"])
    for aspect in sorted(tally.per_aspect):
        wins, total = tally.per_aspect[aspect]
        writer.writerow([aspect, wins, total, f"{100.0 * wins / total:.2f}"])
    return buf.getvalue()


def benchmark_to_markdown(table: BenchmarkTable) -> str:
    lines = [
        f"# Frame-count accuracy ({table.mode})",
        "",
        "| Shots | Trials | Accuracy | Position accuracy |",
        "| ---: | ---: | ---: | ---: |",
    ]
    for row in table.rows:
        lines.append(
            f"| {row.shot_count} | {row.trials} | {row.accuracy:.4f} | {row.position_accuracy:.4f} |"
        )
    return "\n".join(lines) + "\n"


def benchmark_to_csv(table: BenchmarkTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["shot_count", "trials", "accuracy", "position_accuracy"])
    for row in table.rows:
        writer.writerow([row.shot_count, row.trials, f"{row.accuracy:.6f}", f"{row.position_accuracy:.6f}"])
    return buf.getvalue()


def alignment_by_bucket_to_markdown(reports: Sequence[AlignmentReport]) -> str:
    """Mean alignment grouped into 1 / 2 / 3+ character buckets."""
    buckets: dict[str, list[float]] = {"1": [], "2": [], "3+": []}
    for r in reports:
        if r.character_count_bucket in buckets:
            buckets[r.character_count_bucket].append(r.mean)
    lines = ["# Alignment by character count", "", "| Bucket | Scenes | Mean alignment |", "| --- | ---: | ---: |"]
    for bucket in ("1", "2", "3+"):
        vals = buckets[bucket]
        mean = f"{np.mean(vals):.4f}" if vals else "-"
        lines.append(f"| {bucket} Char. | {len(vals)} | {mean} |")
    return "\n".join(lines) + "\n"
