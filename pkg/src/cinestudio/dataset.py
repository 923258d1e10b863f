"""Dataset construction on user-supplied scene records: multi-shot
filtering, shot-count balancing, description refinement, attribute
extraction prompts, portrait cropping, shot-size labeling, and export of
training-ready sheets with their generation prompts.

Records live in a JSON-lines file next to a directory of PNG keyframes;
the exported manifest is a single JSON document."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace
from importlib import resources as importlib_resources
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np

from .backends import Message
from .generation import build_generation_prompt
from .script import ScenePlan, ShotSize
from .sheets import LayoutSpec, compose_sheet, normalize_frame, save_png, sheet_sidecar


class DatasetError(Exception):
    pass


class InsufficientSupplyError(DatasetError):
    pass


class UnknownLabelError(DatasetError):
    pass


@dataclass(frozen=True)
class CharacterBox:
    name: str
    bbox: tuple[int, int, int, int]  # x, y, w, h in pixels


@dataclass(frozen=True)
class SceneRecord:
    movie_id: str
    scene_id: str
    keyframe_paths: tuple[str, ...]
    scene_description: str
    plot: str | None = None
    character_boxes: tuple[tuple[CharacterBox, ...], ...] = ()  # one tuple per keyframe
    shot_sizes: tuple[str, ...] | None = None
    original_description: str | None = None  # provenance before refinement
    plan: ScenePlan | None = None

    @property
    def shot_count(self) -> int:
        return len(self.keyframe_paths)

    def to_json_dict(self) -> dict:
        return {
            "movie_id": self.movie_id,
            "scene_id": self.scene_id,
            "keyframe_paths": list(self.keyframe_paths),
            "scene_description": self.scene_description,
            "plot": self.plot,
            "character_boxes": [
                [{"name": b.name, "bbox": list(b.bbox)} for b in frame_boxes]
                for frame_boxes in self.character_boxes
            ],
            "shot_sizes": list(self.shot_sizes) if self.shot_sizes is not None else None,
            "original_description": self.original_description,
            "plan": self.plan.to_json_dict() if self.plan is not None else None,
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "SceneRecord":
        return cls(
            movie_id=d["movie_id"],
            scene_id=d["scene_id"],
            keyframe_paths=tuple(d["keyframe_paths"]),
            scene_description=d["scene_description"],
            plot=d.get("plot"),
            character_boxes=tuple(
                tuple(CharacterBox(name=b["name"], bbox=tuple(b["bbox"])) for b in frame_boxes)
                for frame_boxes in d.get("character_boxes", [])
            ),
            shot_sizes=tuple(d["shot_sizes"]) if d.get("shot_sizes") is not None else None,
            original_description=d.get("original_description"),
            plan=ScenePlan.from_json_dict(d["plan"]) if d.get("plan") else None,
        )


def read_records(path) -> list[SceneRecord]:
    records = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                records.append(SceneRecord.from_json_dict(json.loads(line)))
    return records


def write_records(records: Sequence[SceneRecord], path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r.to_json_dict()) + "\n")


def filter_multishot(
    records: Sequence[SceneRecord], min_shots: int = 2, max_shots: int = 10
) -> list[SceneRecord]:
    """Keep records whose shot count falls in [min_shots, max_shots],
    preserving order. Idempotent for fixed bounds."""
    return [r for r in records if min_shots <= r.shot_count <= max_shots]


BALANCE_BUCKETS = tuple(range(3, 11))


def balance_by_shot_count(
    records: Sequence[SceneRecord], target_n: int, rng_seed: int = 0
) -> list[SceneRecord]:
    """Select target_n records spread as evenly as possible over the shot
    count buckets 3..10: per-bucket quota floor(target/8) with the
    remainder going to the lowest counts first; a bucket that cannot fill
    its quota hands the deficit round-robin to buckets with surplus.
    Sampling within a bucket is seeded-uniform; output keeps input order."""
    buckets: dict[int, list[int]] = {n: [] for n in BALANCE_BUCKETS}
    for i, r in enumerate(records):
        if r.shot_count in buckets:
            buckets[r.shot_count].append(i)
    supply = {n: len(ix) for n, ix in buckets.items()}
    if sum(supply.values()) < target_n:
        raise InsufficientSupplyError(
            f"only {sum(supply.values())} records in buckets {BALANCE_BUCKETS[0]}..{BALANCE_BUCKETS[-1]}, need {target_n}"
        )
    nonempty = [n for n in BALANCE_BUCKETS if supply[n] > 0]
    if target_n < len(nonempty):
        raise ValueError(f"target_n must be >= {len(nonempty)} non-empty buckets")

    base = target_n // len(BALANCE_BUCKETS)
    quota = {n: base for n in BALANCE_BUCKETS}
    for n in BALANCE_BUCKETS[: target_n % len(BALANCE_BUCKETS)]:
        quota[n] += 1

    alloc = {n: min(quota[n], supply[n]) for n in BALANCE_BUCKETS}
    deficit = target_n - sum(alloc.values())
    while deficit > 0:
        progressed = False
        for n in BALANCE_BUCKETS:
            if deficit > 0 and alloc[n] < supply[n]:
                alloc[n] += 1
                deficit -= 1
                progressed = True
        if not progressed:  # unreachable given the supply check
            raise InsufficientSupplyError("cannot place remaining quota")

    rng = np.random.default_rng(rng_seed)
    chosen: set[int] = set()
    for n in BALANCE_BUCKETS:
        if alloc[n] == 0:
            continue
        perm = rng.permutation(len(buckets[n]))
        chosen.update(buckets[n][j] for j in perm[: alloc[n]])
    return [records[i] for i in sorted(chosen)]


def _resource(name: str) -> str:
    return importlib_resources.files("cinestudio.resources").joinpath(name).read_text()


def build_coref_prompt(scene_description: str, plot: str) -> list[Message]:
    """Messages asking a chat model to replace pronouns and abbreviations in
    the scene description with full names and places inferred from the plot."""
    if not scene_description.strip() or not plot.strip():
        raise ValueError("scene description and plot must be non-empty")
    return [
        {"role": "system", "content": _resource("coref_instruction.txt")},
        {
            "role": "user",
            "content": f"Plot:\n{plot}\n\nScene description:\n{scene_description}",
        },
    ]


def apply_refinement(record: SceneRecord, refined_text: str) -> SceneRecord:
    """Install the refined description, keeping the original in provenance.
    Idempotent: re-applying the same text changes nothing further."""
    if not refined_text.strip():
        raise ValueError("refined text must be non-empty")
    original = record.original_description or record.scene_description
    return replace(record, scene_description=refined_text, original_description=original)


def crop_portrait(frame: np.ndarray, bbox: tuple[int, int, int, int]) -> np.ndarray:
    """Exact pixel crop of (x, y, w, h); no resampling."""
    x, y, w, h = bbox
    fh, fw = frame.shape[:2]
    if w <= 0 or h <= 0:
        raise DatasetError(f"empty box {bbox}")
    if x < 0 or y < 0 or x + w > fw or y + h > fh:
        raise DatasetError(f"box {bbox} outside {fw}x{fh} frame")
    return frame[y:y + h, x:x + w].copy()


MAX_PORTRAITS = 3


def select_portrait_boxes(record: SceneRecord, character: str) -> list[tuple[int, CharacterBox]]:
    """Up to three (frame index, box) picks for a character, largest area
    first; larger crops carry more appearance detail."""
    candidates = [
        (i, box)
        for i, frame_boxes in enumerate(record.character_boxes)
        for box in frame_boxes
        if box.name == character
    ]
    candidates.sort(key=lambda pair: (-(pair[1].bbox[2] * pair[1].bbox[3]), pair[0]))
    return candidates[:MAX_PORTRAITS]


def build_attribute_prompts(
    record: SceneRecord,
    keyframes: Sequence[Any],
    portraits: dict[str, Sequence[Any]],
) -> dict[str, Any]:
    """Extraction prompts for the three MLLM tasks: one setting prompt over
    all keyframes, one shot prompt per keyframe (with every character
    portrait as context), and one character prompt per character with at
    most three portraits."""
    portraits = {name: list(items)[:MAX_PORTRAITS] for name, items in portraits.items()}
    all_portraits = [p for items in portraits.values() for p in items]
    setting_prompt: list[Message] = [
        {"role": "system", "content": _resource("extract_setting.txt")},
        {
            "role": "user",
            "content": f"The {len(keyframes)} keyframes of scene {record.scene_id}, in order.",
            "images": list(keyframes),
        },
    ]
    shot_prompts = [
        [
            {"role": "system", "content": _resource("extract_shot.txt")},
            {
                "role": "user",
                "content": (
                    f"Keyframe {k + 1} of scene {record.scene_id}, followed by the "
                    f"character portraits: {', '.join(portraits)}."
                ),
                "images": [frame] + all_portraits,
            },
        ]
        for k, frame in enumerate(keyframes)
    ]
    character_prompts = {
        name: [
            {"role": "system", "content": _resource("extract_character.txt")},
            {
                "role": "user",
                "content": f"Portraits of {name} from scene {record.scene_id}.",
                "images": items,
            },
        ]
        for name, items in portraits.items()
    }
    return {
        "setting_prompt": setting_prompt,
        "shot_prompts": shot_prompts,
        "character_prompts": character_prompts,
    }


# 5-way classifier labels -> the three-way enum (mapping table v1)
SHOT_SIZE_LABEL_MAP = {
    "extreme close-up": ShotSize.CLOSE_UP,
    "close-up": ShotSize.CLOSE_UP,
    "medium close-up": ShotSize.MEDIUM,
    "medium": ShotSize.MEDIUM,
    "medium shot": ShotSize.MEDIUM,
    "full": ShotSize.WIDE,
    "full shot": ShotSize.WIDE,
    "long": ShotSize.WIDE,
    "long shot": ShotSize.WIDE,
    "wide": ShotSize.WIDE,
    "extreme wide": ShotSize.WIDE,
}


def label_shot_size(frame: np.ndarray, classifier: Callable[[np.ndarray], str]) -> ShotSize:
    """Run the classifier backend and map its label into the three-way enum."""
    label = classifier(frame).strip().lower()
    try:
        return SHOT_SIZE_LABEL_MAP[label]
    except KeyError:
        raise UnknownLabelError(f"classifier label {label!r} has no shot-size mapping") from None


# --- export -----------------------------------------------------------------


@dataclass(frozen=True)
class ManifestEntry:
    scene_id: str
    shot_count: int
    sheet_path: str
    prompt_text: str
    plan: dict


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    histogram: dict[int, int]

    def to_json_dict(self) -> dict:
        return {
            "entries": [
                {
                    "scene_id": e.scene_id,
                    "shot_count": e.shot_count,
                    "sheet_path": e.sheet_path,
                    "prompt_text": e.prompt_text,
                    "plan": e.plan,
                }
                for e in self.entries
            ],
            "histogram": {str(k): v for k, v in sorted(self.histogram.items())},
        }

    @classmethod
    def from_json_dict(cls, d: dict) -> "DatasetManifest":
        return cls(
            entries=tuple(
                ManifestEntry(
                    scene_id=e["scene_id"],
                    shot_count=e["shot_count"],
                    sheet_path=e["sheet_path"],
                    prompt_text=e["prompt_text"],
                    plan=e["plan"],
                )
                for e in d["entries"]
            ),
            histogram={int(k): v for k, v in d["histogram"].items()},
        )


def write_manifest(manifest: DatasetManifest, path) -> None:
    Path(path).write_text(json.dumps(manifest.to_json_dict(), indent=2) + "\n", encoding="utf-8")


def read_manifest(path) -> DatasetManifest:
    return DatasetManifest.from_json_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _load_keyframes(record: SceneRecord) -> list[np.ndarray]:
    from .sheets import load_png

    return [load_png(p) for p in record.keyframe_paths]


def sheet_width_for(frames: Sequence[np.ndarray], layout: LayoutSpec) -> int:
    """One sheet width for a scene: the widest frame after height
    normalization, rounded up to the layout's width multiple."""
    widths = [max(1, round(f.shape[1] * layout.frame_height / f.shape[0])) for f in frames]
    return math.ceil(max(widths) / layout.width_multiple) * layout.width_multiple


def export_training_pairs(
    records: Sequence[SceneRecord],
    layout: LayoutSpec,
    out_dir,
    frames_loader: Callable[[SceneRecord], list[np.ndarray]] = _load_keyframes,
) -> DatasetManifest:
    """Write one training pair per record: a composed sheet PNG with its
    sidecar, the generation prompt text, and the plan JSON. Records are
    processed in scene_id order so the manifest is deterministic."""
    out = Path(out_dir)
    (out / "sheets").mkdir(parents=True, exist_ok=True)
    entries = []
    histogram: dict[int, int] = {}
    for record in sorted(records, key=lambda r: r.scene_id):
        if record.plan is None:
            raise DatasetError(f"record {record.scene_id} has no plan; extract attributes first")
        frames = frames_loader(record)
        width = sheet_width_for(frames, layout)
        normalized = [normalize_frame(f, layout, width) for f in frames]
        sheet = compose_sheet(normalized, layout)
        prompt = build_generation_prompt(record.plan)
        sheet_path = out / "sheets" / f"{record.scene_id}.png"
        save_png(sheet.image, sheet_path)
        from .sheets import border_row_positions

        sidecar = sheet_sidecar(
            sheet,
            border_row_positions(len(normalized), layout),
            source_plan_id=record.scene_id,
        )
        (out / "sheets" / f"{record.scene_id}.json").write_text(
            json.dumps(sidecar, indent=2) + "\n", encoding="utf-8"
        )
        (out / "sheets" / f"{record.scene_id}.prompt.txt").write_text(
            prompt.text + "\n", encoding="utf-8"
        )
        (out / "sheets" / f"{record.scene_id}.plan.json").write_text(
            json.dumps(record.plan.to_json_dict(), indent=2) + "\n", encoding="utf-8"
        )
        n = len(normalized)
        entries.append(
            ManifestEntry(
                scene_id=record.scene_id,
                shot_count=n,
                sheet_path=str(sheet_path),
                prompt_text=prompt.text,
                plan=record.plan.to_json_dict(),
            )
        )
        histogram[n] = histogram.get(n, 0) + 1
    return DatasetManifest(entries=tuple(entries), histogram=histogram)
