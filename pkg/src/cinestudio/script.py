"""Scene-plan data model and the canonical line-oriented script format.

A script is a sequence of sections introduced by headers at line start:

    SCENE: <scene description>
    SETTING: <setting description>
    CHARACTER <name>: <appearance>
    SHOT <k> [<size>]: <shot description>

A section's body runs until the next header; continuation lines are joined
with a single space during canonicalization. Headers are case-sensitive.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any


class ShotSize(Enum):
    CLOSE_UP = "close-up"
    MEDIUM = "medium"
    WIDE = "wide"

    @property
    def token(self) -> str:
        return self.value

    @classmethod
    def from_token(cls, token: str) -> "ShotSize":
        for member in cls:
            if member.value == token:
                return member
        raise ValueError(f"unknown shot size token: {token!r}")


HEADER_KEYWORDS = ("SCENE:", "SETTING:", "CHARACTER ", "SHOT ")

_SCENE_RE = re.compile(r"^SCENE:\s?(.*)$")
_SETTING_RE = re.compile(r"^SETTING:\s?(.*)$")
_CHARACTER_RE = re.compile(r"^CHARACTER ([^:\n]+):\s?(.*)$")
_SHOT_RE = re.compile(r"^SHOT (\d+) \[([^\]]*)\]:\s?(.*)$")


@dataclass(frozen=True)
class CharacterSpec:
    name: str
    appearance: str


@dataclass(frozen=True)
class ShotSpec:
    index: int
    size: ShotSize
    description: str
    referenced_characters: tuple[str, ...] = ()


@dataclass(frozen=True)
class ScenePlan:
    scene_description: str
    setting: str
    characters: tuple[CharacterSpec, ...]
    shots: tuple[ShotSpec, ...]

    def character_names(self) -> tuple[str, ...]:
        return tuple(c.name for c in self.characters)

    def to_json_dict(self) -> dict[str, Any]:
        return {
            "scene_description": self.scene_description,
            "setting": self.setting,
            "characters": [
                {"name": c.name, "appearance": c.appearance} for c in self.characters
            ],
            "shots": [
                {
                    "index": s.index,
                    "size": s.size.token,
                    "description": s.description,
                    "referenced_characters": list(s.referenced_characters),
                }
                for s in self.shots
            ],
        }

    @classmethod
    def from_json_dict(cls, data: dict[str, Any]) -> "ScenePlan":
        return cls(
            scene_description=data.get("scene_description", ""),
            setting=data.get("setting", ""),
            characters=tuple(
                CharacterSpec(name=c["name"], appearance=c["appearance"])
                for c in data.get("characters", [])
            ),
            shots=tuple(
                ShotSpec(
                    index=int(s["index"]),
                    size=ShotSize.from_token(s["size"]),
                    description=s["description"],
                    referenced_characters=tuple(s.get("referenced_characters", [])),
                )
                for s in data.get("shots", [])
            ),
        )


@dataclass(frozen=True)
class Violation:
    rule: str
    field: str
    message: str

    def __str__(self) -> str:
        return f"{self.rule} ({self.field}): {self.message}"


class ScriptError(Exception):
    pass


class ScriptParseError(ScriptError):
    """Raised when script text cannot be turned into a structurally sound plan."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class InvalidPlanError(ScriptError):
    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


def _clean(body_lines: list[str]) -> str:
    return " ".join(part for part in (ln.strip() for ln in body_lines) if part)


def parse_script(text: str) -> ScenePlan:
    """Parse canonical (or near-canonical) script text into a ScenePlan.

    Raises ScriptParseError carrying every structural violation found.
    """
    violations: list[Violation] = []
    scene_body: list[str] | None = None
    setting_body: list[str] | None = None
    characters: list[tuple[str, list[str]]] = []
    shots: list[tuple[int, str, list[str]]] = []
    current: list[str] | None = None

    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SCENE_RE.match(line)
        if m:
            if scene_body is not None:
                violations.append(
                    Violation("DuplicateSection", "scene_description", f"second SCENE header at line {lineno}")
                )
            scene_body = [m.group(1)]
            current = scene_body
            continue
        m = _SETTING_RE.match(line)
        if m:
            if setting_body is not None:
                violations.append(
                    Violation("DuplicateSection", "setting", f"second SETTING header at line {lineno}")
                )
            setting_body = [m.group(1)]
            current = setting_body
            continue
        m = _CHARACTER_RE.match(line)
        if m:
            body = [m.group(2)]
            characters.append((m.group(1).strip(), body))
            current = body
            continue
        m = _SHOT_RE.match(line)
        if m:
            body = [m.group(3)]
            shots.append((int(m.group(1)), m.group(2), body))
            current = body
            continue
        if line.strip() and current is None:
            violations.append(
                Violation("UnexpectedText", "script", f"line {lineno} precedes any section header: {line.strip()!r}")
            )
        elif line.strip():
            current.append(line)

    if setting_body is None:
        violations.append(Violation("MissingSection", "setting", "no SETTING header"))
    if not shots:
        violations.append(Violation("MissingSection", "shots", "no SHOT headers"))

    seen_names: set[str] = set()
    char_specs: list[CharacterSpec] = []
    for name, body in characters:
        if name in seen_names:
            violations.append(Violation("DuplicateCharacter", "characters", f"character {name!r} declared twice"))
        seen_names.add(name)
        char_specs.append(CharacterSpec(name=name, appearance=_clean(body)))

    shot_specs: list[ShotSpec] = []
    for pos, (index, size_token, body) in enumerate(shots, start=1):
        try:
            size = ShotSize.from_token(size_token)
        except ValueError:
            violations.append(
                Violation("UnknownShotSize", f"shots[{pos}]", f"size {size_token!r} is not one of close-up/medium/wide")
            )
            size = ShotSize.MEDIUM
        if index != pos:
            violations.append(
                Violation("NonContiguousShotIndices", f"shots[{pos}]", f"expected SHOT {pos}, found SHOT {index}")
            )
        shot_specs.append(ShotSpec(index=index, size=size, description=_clean(body)))

    if violations:
        raise ScriptParseError(violations)

    plan = ScenePlan(
        scene_description=_clean(scene_body) if scene_body is not None else "",
        setting=_clean(setting_body),
        characters=tuple(char_specs),
        shots=tuple(shot_specs),
    )
    return resolve_characters(plan)


def serialize_script(plan: ScenePlan) -> str:
    """Emit the canonical text for a plan. Deterministic; inverse of parse_script."""
    violations = validate(plan)
    if violations:
        raise InvalidPlanError(violations)
    lines = [f"SCENE: {plan.scene_description}", f"SETTING: {plan.setting}"]
    for c in plan.characters:
        lines.append(f"CHARACTER {c.name}: {c.appearance}")
    for s in plan.shots:
        lines.append(f"SHOT {s.index} [{s.size.token}]: {s.description}")
    return "\n".join(lines) + "\n"


def validate(plan: ScenePlan, strict_shot_range: bool = False) -> list[Violation]:
    """Check every plan invariant; returns violations as data, never raises.

    strict_shot_range narrows the accepted shot count from 1..32 to 3..10
    (the range the generation model is trained for).
    """
    violations: list[Violation] = []
    lo, hi = (3, 10) if strict_shot_range else (1, 32)
    if not plan.shots:
        violations.append(Violation("EmptyShotList", "shots", "plan has no shots"))
    elif not lo <= len(plan.shots) <= hi:
        violations.append(
            Violation("ShotCountOutOfRange", "shots", f"{len(plan.shots)} shots outside {lo}..{hi}")
        )
    if not plan.setting.strip():
        violations.append(Violation("EmptySetting", "setting", "setting must be non-empty"))
    for fieldname, value in (("scene_description", plan.scene_description), ("setting", plan.setting)):
        if "\n" in value:
            violations.append(Violation("EmbeddedNewline", fieldname, "free text must be single-line after canonicalization"))

    seen: set[str] = set()
    for i, c in enumerate(plan.characters):
        if not c.name.strip():
            violations.append(Violation("EmptyCharacterName", f"characters[{i}]", "name must be non-empty"))
        if "\n" in c.name:
            violations.append(Violation("InvalidCharacterName", f"characters[{i}]", "name contains a newline"))
        for kw in HEADER_KEYWORDS:
            if kw in c.name:
                violations.append(
                    Violation("InvalidCharacterName", f"characters[{i}]", f"name contains header keyword {kw!r}")
                )
        if c.name in seen:
            violations.append(Violation("DuplicateCharacter", f"characters[{i}]", f"character {c.name!r} declared twice"))
        seen.add(c.name)
        if not c.appearance.strip():
            violations.append(Violation("EmptyAppearance", f"characters[{i}]", f"{c.name!r} has no appearance"))
        if "\n" in c.appearance:
            violations.append(Violation("EmbeddedNewline", f"characters[{i}]", "appearance must be single-line"))

    declared = set(plan.character_names())
    for pos, s in enumerate(plan.shots, start=1):
        if s.index != pos:
            violations.append(
                Violation("NonContiguousShotIndices", f"shots[{pos}]", f"index {s.index} at position {pos}")
            )
        if not s.description.strip():
            violations.append(Violation("EmptyShotDescription", f"shots[{pos}]", "description must be non-empty"))
        if "\n" in s.description:
            violations.append(Violation("EmbeddedNewline", f"shots[{pos}]", "description must be single-line"))
        for name in s.referenced_characters:
            if name not in declared:
                violations.append(
                    Violation("UnknownCharacterReference", f"shots[{pos}]", f"references undeclared {name!r}")
                )
    return violations


def resolve_characters(plan: ScenePlan) -> ScenePlan:
    """Recompute each shot's referenced_characters by exact whole-word,
    case-sensitive match of declared names in the shot description."""
    names = plan.character_names()
    patterns = [(n, re.compile(r"(?<!\w)" + re.escape(n) + r"(?!\w)")) for n in names]
    shots = tuple(
        replace(
            s,
            referenced_characters=tuple(n for n, pat in patterns if pat.search(s.description)),
        )
        for s in plan.shots
    )
    return replace(plan, shots=shots)
