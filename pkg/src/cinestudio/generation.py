"""Stage 2: keyframe generation orchestration.

Builds the single concatenated prompt with per-shot separator tokens,
derives the sheet dimensions from the shot count, calls an image backend
once per scene, then detects borders and splits the returned sheet. A shot
count mismatch is recorded on the result, never raised: it is a measured
failure mode of the generator, not a bug in the caller.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass

import numpy as np

from .backends import BackendError, ImageGenBackend
from .script import ScenePlan, validate
from .sheets import (
    BoundaryReport,
    LayoutSpec,
    Sheet,
    border_row_positions,
    compose_sheet,
    detect_borders_checker,
    expected_sheet_height,
    split_sheet,
)

DEFAULT_SEPARATOR_TEMPLATE = "[SHOT-{k}]"
DEFAULT_BASE_WIDTH = 464


class GenerationError(Exception):
    pass


class DimensionViolationError(GenerationError):
    pass


@dataclass(frozen=True)
class GenerationPrompt:
    text: str
    separator_token_template: str
    shot_count: int

    def separator_tokens(self) -> list[str]:
        return [self.separator_token_template.format(k=k) for k in range(1, self.shot_count + 1)]


@dataclass(frozen=True)
class GenerationResult:
    sheet: Sheet
    frames: list[np.ndarray]
    plan: ScenePlan
    boundary: BoundaryReport
    count_ok: bool
    seed: int


def build_generation_prompt(
    plan: ScenePlan, template: str = DEFAULT_SEPARATOR_TEMPLATE
) -> GenerationPrompt:
    """Render the plan into one prompt: global summary first, then every
    shot introduced by its separator token, sizes as canonical tokens."""
    violations = validate(plan)
    if violations:
        raise GenerationError("invalid plan: " + "; ".join(str(v) for v in violations))
    n = len(plan.shots)
    parts = [f"{n}-shot cinematic scene.", f"Setting: {plan.setting}."]
    if plan.characters:
        chars = "; ".join(f"{c.name}: {c.appearance}" for c in plan.characters)
        parts.append(f"Characters: {chars}.")
    for shot in plan.shots:
        token = template.format(k=shot.index)
        parts.append(f"{token} {shot.size.token} shot: {shot.description}")
    return GenerationPrompt(text=" ".join(parts), separator_token_template=template, shot_count=n)


def target_dimensions(
    plan: ScenePlan, layout: LayoutSpec, base_width: int = DEFAULT_BASE_WIDTH
) -> tuple[int, int]:
    """Sheet size for a plan: fixed width, height a pure function of the
    shot count, so the generator cannot be tricked into a different frame
    count by the canvas size."""
    if base_width <= 0 or base_width % layout.width_multiple != 0:
        raise ValueError(f"base_width must be a positive multiple of {layout.width_multiple}")
    return base_width, expected_sheet_height(len(plan.shots), layout)


def generate_keyframes(
    plan: ScenePlan,
    backend: ImageGenBackend,
    layout: LayoutSpec = LayoutSpec(),
    base_width: int = DEFAULT_BASE_WIDTH,
    seed: int = 0,
) -> GenerationResult:
    """One backend call for the whole scene, then border detection and
    splitting. count_ok records whether the detected frame count matches
    the plan."""
    prompt = build_generation_prompt(plan)
    width, height = target_dimensions(plan, layout, base_width)
    image = backend.render(prompt.text, width, height, seed)
    if image.shape[0] != height or image.shape[1] != width:
        raise DimensionViolationError(
            f"backend returned {image.shape[1]}x{image.shape[0]}, requested {width}x{height}"
        )
    sheet = Sheet(image=image, layout=layout)
    boundary = detect_borders_checker(sheet)
    frames = split_sheet(sheet, boundary)
    return GenerationResult(
        sheet=sheet,
        frames=frames,
        plan=plan,
        boundary=boundary,
        count_ok=len(frames) == len(plan.shots),
        seed=seed,
    )


# --- deterministic mock backend ---------------------------------------------


@dataclass(frozen=True)
class FaultConfig:
    """Fault injection for the mock generator: each border band is
    independently destroyed with missing_border_rate; crop faults shift the
    first/last frame's content to emulate cropped compositions."""

    missing_border_rate: float = 0.0
    crop_first_rate: float = 0.0
    crop_last_rate: float = 0.0
    rng_seed: int = 0

    @classmethod
    def from_json_dict(cls, d: dict) -> "FaultConfig":
        return cls(**d)


def _hash64(*parts: object) -> int:
    h = hashlib.sha256("|".join(str(p) for p in parts).encode("utf-8")).digest()
    return int.from_bytes(h[:8], "big")


def shot_fill_color(shot_text: str, seed: int) -> tuple[int, int, int]:
    """Stable 24-bit color for a shot: distinct texts get distinct colors
    with overwhelming probability."""
    h = hashlib.sha256(f"{shot_text}|{seed}".encode("utf-8")).digest()
    return (h[0], h[1], h[2])


def mock_frame(
    shot_text: str, seed: int, width: int, height: int, texture_amplitude: int = 8
) -> np.ndarray:
    """Solid fill at the shot's hash color plus low-amplitude deterministic
    texture."""
    color = np.array(shot_fill_color(shot_text, seed), dtype=np.int16)
    frame = np.tile(color, (height, width, 1))
    if texture_amplitude > 0:
        rng = np.random.default_rng(_hash64("texture", shot_text, seed))
        noise = rng.integers(-texture_amplitude, texture_amplitude + 1, size=frame.shape, dtype=np.int16)
        frame = frame + noise
    return np.clip(frame, 0, 255).astype(np.uint8)


def _split_prompt_shots(prompt_text: str, template: str) -> list[str]:
    token_re = re.escape(template).replace(re.escape("{k}"), r"\d+")
    pieces = re.split(f"(?={token_re})", prompt_text)
    shots = [p for p in pieces[1:]]
    return [re.sub(f"^{token_re}", "", p).strip() for p in shots]


class MockImageGenBackend:
    """Deterministic stand-in for the fine-tuned text-to-image model.

    Parses the per-shot texts back out of the generation prompt, fills each
    frame with a hash-derived color plus texture, and draws the
    checkerboard bands between frames (or omits them entirely with
    bordered=False, emulating a baseline that was never trained with
    borders). FaultConfig injects the measured failure modes."""

    def __init__(
        self,
        layout: LayoutSpec = LayoutSpec(),
        fault_config: FaultConfig = FaultConfig(),
        bordered: bool = True,
        texture_amplitude: int = 8,
        separator_template: str = DEFAULT_SEPARATOR_TEMPLATE,
    ):
        self.layout = layout
        self.fault_config = fault_config
        self.bordered = bordered
        self.texture_amplitude = texture_amplitude
        self.separator_template = separator_template

    def render(self, prompt: str, width: int, height: int, seed: int) -> np.ndarray:
        shot_texts = _split_prompt_shots(prompt, self.separator_template)
        n = len(shot_texts)
        if n == 0:
            raise BackendError("prompt contains no separator tokens")
        layout = self.layout
        fh = layout.frame_height
        expected = expected_sheet_height(n, layout) if self.bordered else n * fh
        if height != expected:
            raise DimensionViolationError(f"requested height {height}, layout implies {expected} for {n} shots")

        frames = [mock_frame(t, seed, width, fh, self.texture_amplitude) for t in shot_texts]
        fault_rng = np.random.default_rng(_hash64("faults", self.fault_config.rng_seed, seed))
        cfg = self.fault_config
        if frames and fault_rng.random() < cfg.crop_first_rate:
            frames[0] = np.roll(frames[0], fh // 4, axis=0)
        if frames and fault_rng.random() < cfg.crop_last_rate:
            frames[-1] = np.roll(frames[-1], -(fh // 4), axis=0)

        if not self.bordered:
            return np.concatenate(frames, axis=0)
        sheet = compose_sheet(frames, layout).image.copy()
        for band, cut in enumerate(border_row_positions(n, layout)):
            if fault_rng.random() < cfg.missing_border_rate:
                sheet[cut:cut + layout.border_thickness] = frames[band][-layout.border_thickness:]
        return sheet


def destroy_borders(sheet: Sheet, band_indices: list[int]) -> Sheet:
    """Fault injector for tests: overwrite the given border bands with the
    bottom rows of the frame above, erasing the checkerboard."""
    layout = sheet.layout
    n = sheet.frame_count_hint
    if n is None:
        step = layout.frame_height + layout.border_thickness
        if (sheet.image.shape[0] + layout.border_thickness) % step != 0:
            raise ValueError("sheet height does not fit the bordered layout")
        n = (sheet.image.shape[0] + layout.border_thickness) // step
    img = sheet.image.copy()
    cuts = border_row_positions(n, layout)
    for b in band_indices:
        if not 0 <= b < len(cuts):
            raise ValueError(f"band {b} out of range")
        cut = cuts[b]
        img[cut:cut + layout.border_thickness] = img[cut - layout.border_thickness:cut]
    return Sheet(image=img, layout=layout, frame_count_hint=n)
