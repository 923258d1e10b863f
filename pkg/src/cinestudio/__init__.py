"""Cinematic scene composition toolkit: LLM scene planning into a
structured script, multi-keyframe sheet generation with deterministic
layout and splitting, dataset construction, and evaluation harnesses."""

from .script import (
    CharacterSpec,
    ScenePlan,
    ShotSize,
    ShotSpec,
    Violation,
    parse_script,
    resolve_characters,
    serialize_script,
    validate,
)
from .sheets import (
    BoundaryMethod,
    BoundaryReport,
    LayoutSpec,
    Sheet,
    compose_sheet,
    count_frames,
    detect_borders_checker,
    detect_borders_rowdiff,
    expected_sheet_height,
    frame_count_accuracy,
    normalize_frame,
    render_border,
    split_sheet,
)
from .generation import (
    FaultConfig,
    GenerationPrompt,
    GenerationResult,
    MockImageGenBackend,
    build_generation_prompt,
    generate_keyframes,
    target_dimensions,
)
from .planning import (
    Exemplar,
    PlanningOutcome,
    PromptStrategy,
    build_planning_prompt,
    plan_scene,
)

__version__ = "0.1.0"

__all__ = [
    "CharacterSpec", "ScenePlan", "ShotSize", "ShotSpec", "Violation",
    "parse_script", "resolve_characters", "serialize_script", "validate",
    "BoundaryMethod", "BoundaryReport", "LayoutSpec", "Sheet",
    "compose_sheet", "count_frames", "detect_borders_checker",
    "detect_borders_rowdiff", "expected_sheet_height", "frame_count_accuracy",
    "normalize_frame", "render_border", "split_sheet",
    "FaultConfig", "GenerationPrompt", "GenerationResult",
    "MockImageGenBackend", "build_generation_prompt", "generate_keyframes",
    "target_dimensions",
    "Exemplar", "PlanningOutcome", "PromptStrategy", "build_planning_prompt",
    "plan_scene",
    "__version__",
]
