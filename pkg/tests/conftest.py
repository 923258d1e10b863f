import random
import string

import numpy as np
import pytest

from cinestudio.script import CharacterSpec, ScenePlan, ShotSize, ShotSpec, resolve_characters


def random_plan(rng: random.Random, max_shots: int = 10) -> ScenePlan:
    """A structurally valid plan with random single-line free text."""
    def text(prefix):
        body = "".join(rng.choices(string.ascii_letters + string.digits + " ,.", k=rng.randint(3, 40)))
        return f"{prefix} {body}".strip()

    n_chars = rng.randint(0, 4)
    names = rng.sample(["Lucy", "Tom", "Mara", "Victor", "Ingrid", "Sam", "Ada"], n_chars)
    characters = tuple(CharacterSpec(name=n, appearance=text("wears")) for n in names)
    n_shots = rng.randint(1, max_shots)
    shots = tuple(
        ShotSpec(
            index=k,
            size=rng.choice(list(ShotSize)),
            description=(rng.choice(names) + " " if names and rng.random() < 0.6 else "") + text("does"),
        )
        for k in range(1, n_shots + 1)
    )
    return resolve_characters(
        ScenePlan(
            scene_description=text("scene"),
            setting=text("in"),
            characters=characters,
            shots=shots,
        )
    )


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
