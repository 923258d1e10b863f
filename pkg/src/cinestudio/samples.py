"""Deterministic synthetic plans and records for offline runs and tests."""

from __future__ import annotations

from .script import CharacterSpec, ScenePlan, ShotSize, ShotSpec, resolve_characters

_NAMES = ["Lucy", "Tom", "Mara", "Victor", "Ingrid", "Sam"]
_SIZES = [ShotSize.WIDE, ShotSize.MEDIUM, ShotSize.CLOSE_UP]


def synthetic_plan(shot_count: int, tag: str = "s0", character_count: int = 2) -> ScenePlan:
    """A valid plan with distinct per-shot descriptions; tag keeps plans for
    the same shot count distinguishable (and their mock renders distinct)."""
    characters = tuple(
        CharacterSpec(name=_NAMES[i % len(_NAMES)], appearance=f"appearance {i} for {tag}")
        for i in range(character_count)
    )
    shots = tuple(
        ShotSpec(
            index=k,
            size=_SIZES[(k - 1) % len(_SIZES)],
            description=f"{characters[(k - 1) % len(characters)].name} does action {k} of scene {tag}",
        )
        for k in range(1, shot_count + 1)
    )
    plan = ScenePlan(
        scene_description=f"Synthetic scene {tag} with {shot_count} shots",
        setting=f"Synthetic setting for {tag}",
        characters=characters,
        shots=shots,
    )
    return resolve_characters(plan)


def synthetic_plan_corpus(shot_counts, per_count: int) -> dict[int, list[ScenePlan]]:
    return {
        n: [synthetic_plan(n, tag=f"n{n}-{i}") for i in range(per_count)]
        for n in shot_counts
    }
