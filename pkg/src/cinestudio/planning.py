"""Stage 1: in-context scene planning.

Builds chat prompts under three strategies (generic, instruction-only,
instruction plus exemplars), calls a chat backend, and parses the reply
into a ScenePlan, re-prompting with the violations when the reply does
not follow the script format.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from importlib import resources as importlib_resources

from .backends import ChatBackend, Message
from .script import ScenePlan, ScriptParseError, Violation, parse_script, validate


class PromptStrategy(Enum):
    GENERIC = "generic"
    INSTRUCTION_ONLY = "instruction"
    INSTRUCTION_WITH_EXEMPLARS = "instruction+exemplars"


@dataclass(frozen=True)
class Exemplar:
    scene_description: str
    script_text: str

    def __post_init__(self):
        parse_script(self.script_text)  # must be well-formed


@dataclass(frozen=True)
class PlanningOutcome:
    plan: ScenePlan
    raw_reply: str
    repair_attempts: int
    strategy: PromptStrategy


class PlanningError(Exception):
    pass


class MissingExemplarsError(PlanningError):
    pass


class PlanningFailedError(PlanningError):
    def __init__(self, violations: list[Violation], raw_reply: str, attempts: int):
        self.violations = violations
        self.raw_reply = raw_reply
        self.attempts = attempts
        super().__init__(
            f"no well-formed plan after {attempts} attempts; last violations: "
            + "; ".join(str(v) for v in violations)
        )


def planning_instruction() -> str:
    return importlib_resources.files("cinestudio.resources").joinpath("planning_instruction.txt").read_text()


def _user_request(scene_description: str) -> str:
    return f"Plan for the movie scene description: '{scene_description}'"


def build_planning_prompt(
    scene_description: str,
    strategy: PromptStrategy,
    exemplars: list[Exemplar] | None = None,
) -> list[Message]:
    """Assemble the chat messages for one planning request. Pure function of
    its inputs plus the bundled instruction text."""
    if not scene_description.strip():
        raise ValueError("scene description must be non-empty")
    exemplars = exemplars or []
    if strategy is PromptStrategy.GENERIC:
        return [{"role": "user", "content": _user_request(scene_description)}]
    messages: list[Message] = [{"role": "system", "content": planning_instruction()}]
    if strategy is PromptStrategy.INSTRUCTION_WITH_EXEMPLARS:
        if not exemplars:
            raise MissingExemplarsError("instruction+exemplars strategy needs at least one exemplar")
        for ex in exemplars:
            messages.append({"role": "user", "content": _user_request(ex.scene_description)})
            messages.append({"role": "assistant", "content": ex.script_text})
    messages.append({"role": "user", "content": _user_request(scene_description)})
    return messages


REPAIR_TEMPLATE = (
    "Your reply did not follow the required format: {violations}. "
    "Re-emit the full script."
)


def plan_scene(
    scene_description: str,
    strategy: PromptStrategy,
    exemplars: list[Exemplar] | None,
    backend: ChatBackend,
    max_repairs: int = 2,
) -> PlanningOutcome:
    """Call the backend until a reply parses and validates, appending a
    repair turn quoting the violations after each malformed reply. Backend
    call count is 1 + repair_attempts, never more than 1 + max_repairs."""
    if max_repairs < 0:
        raise ValueError("max_repairs must be >= 0")
    messages = build_planning_prompt(scene_description, strategy, exemplars)
    last_violations: list[Violation] = []
    last_reply = ""
    for attempt in range(max_repairs + 1):
        reply = backend.complete(messages)
        last_reply = reply
        try:
            plan = parse_script(reply)
            violations = validate(plan)
        except ScriptParseError as exc:
            violations = exc.violations
            plan = None
        if plan is not None and not violations:
            return PlanningOutcome(
                plan=plan, raw_reply=reply, repair_attempts=attempt, strategy=strategy
            )
        last_violations = violations
        messages = messages + [
            {"role": "assistant", "content": reply},
            {
                "role": "user",
                "content": REPAIR_TEMPLATE.format(
                    violations="; ".join(str(v) for v in violations)
                ),
            },
        ]
    raise PlanningFailedError(last_violations, last_reply, max_repairs + 1)
