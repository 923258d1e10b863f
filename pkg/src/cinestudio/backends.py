"""Contracts for the pluggable external models (chat, image generation,
embedding, judging) plus live JSON-over-HTTP adapters and deterministic
mocks. Everything in the pipeline reaches a model only through these seams,
so the whole system runs offline with the mocks."""

from __future__ import annotations

import base64
import hashlib
import io
from typing import Any, Protocol, runtime_checkable

import numpy as np

Message = dict[str, Any]  # {"role": ..., "content": ...} plus optional "images"


class BackendError(Exception):
    pass


@runtime_checkable
class ChatBackend(Protocol):
    def complete(self, messages: list[Message]) -> str: ...


@runtime_checkable
class ImageGenBackend(Protocol):
    def render(self, prompt: str, width: int, height: int, seed: int) -> np.ndarray: ...


@runtime_checkable
class EmbeddingBackend(Protocol):
    def embed_text(self, text: str) -> np.ndarray: ...
    def embed_image(self, image: np.ndarray) -> np.ndarray: ...


@runtime_checkable
class JudgeBackend(Protocol):
    def judge(self, messages: list[Message]) -> str: ...


def _last_user_content(messages: list[Message]) -> str:
    for m in reversed(messages):
        if m.get("role") == "user":
            return str(m.get("content", ""))
    return ""


def _digest(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


class ScriptedChatBackend:
    """Mock chat backend: replies come from queues keyed by a hash of the
    last user message; unkeyed calls drain the default queue. Records every
    call for instrumented tests."""

    def __init__(self, default_replies: list[str] | None = None):
        self.default_replies: list[str] = list(default_replies or [])
        self.keyed_replies: dict[str, list[str]] = {}
        self.calls: list[list[Message]] = []

    def add_reply(self, reply: str, for_user_message: str | None = None) -> None:
        if for_user_message is None:
            self.default_replies.append(reply)
        else:
            self.keyed_replies.setdefault(_digest(for_user_message), []).append(reply)

    @property
    def call_count(self) -> int:
        return len(self.calls)

    def complete(self, messages: list[Message]) -> str:
        self.calls.append([dict(m) for m in messages])
        key = _digest(_last_user_content(messages))
        queue = self.keyed_replies.get(key)
        if queue:
            return queue.pop(0)
        if self.default_replies:
            return self.default_replies.pop(0)
        raise BackendError("scripted chat backend has no reply queued")


class HttpChatBackend:
    """Chat-completion client: POST {model, messages, temperature, seed?}
    -> {content}."""

    def __init__(self, endpoint: str, model: str, temperature: float = 0.7,
                 seed: int | None = None, token: str | None = None, timeout: float = 120.0):
        self.endpoint = endpoint
        self.model = model
        self.temperature = temperature
        self.seed = seed
        self.token = token
        self.timeout = timeout

    def complete(self, messages: list[Message]) -> str:
        import httpx

        payload: dict[str, Any] = {
            "model": self.model,
            "messages": messages,
            "temperature": self.temperature,
        }
        if self.seed is not None:
            payload["seed"] = self.seed
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()["content"]
        except Exception as exc:  # noqa: BLE001 - surface as one backend failure type
            raise BackendError(f"chat backend request failed: {exc}") from exc


class HttpImageGenBackend:
    """Image generation client: POST {prompt, width, height, seed, steps?,
    guidance?} -> {image: base64 PNG}."""

    def __init__(self, endpoint: str, steps: int | None = None,
                 guidance: float | None = None, token: str | None = None, timeout: float = 600.0):
        self.endpoint = endpoint
        self.steps = steps
        self.guidance = guidance
        self.token = token
        self.timeout = timeout

    def render(self, prompt: str, width: int, height: int, seed: int) -> np.ndarray:
        import httpx
        from PIL import Image as PILImage

        payload: dict[str, Any] = {"prompt": prompt, "width": width, "height": height, "seed": seed}
        if self.steps is not None:
            payload["steps"] = self.steps
        if self.guidance is not None:
            payload["guidance"] = self.guidance
        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            raw = base64.b64decode(resp.json()["image"])
            with PILImage.open(io.BytesIO(raw)) as im:
                return np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception as exc:  # noqa: BLE001
            raise BackendError(f"image backend request failed: {exc}") from exc


class HttpEmbeddingBackend:
    """Embedding client: POST {kind: "text"|"image", payload} -> {vector}."""

    def __init__(self, endpoint: str, token: str | None = None, timeout: float = 120.0):
        self.endpoint = endpoint
        self.token = token
        self.timeout = timeout

    def _post(self, kind: str, payload: str) -> np.ndarray:
        import httpx

        headers = {"Authorization": f"Bearer {self.token}"} if self.token else {}
        try:
            resp = httpx.post(self.endpoint, json={"kind": kind, "payload": payload},
                              headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            return np.asarray(resp.json()["vector"], dtype=np.float64)
        except Exception as exc:  # noqa: BLE001
            raise BackendError(f"embedding backend request failed: {exc}") from exc

    def embed_text(self, text: str) -> np.ndarray:
        return self._post("text", text)

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        from PIL import Image as PILImage

        buf = io.BytesIO()
        PILImage.fromarray(image, mode="RGB").save(buf, format="PNG")
        return self._post("image", base64.b64encode(buf.getvalue()).decode("ascii"))


class HashEmbeddingBackend:
    """Deterministic mock: maps any text or image to a unit vector seeded by
    a content hash. Identical inputs get identical vectors; distinct inputs
    are approximately orthogonal at high dimension."""

    def __init__(self, dim: int = 64):
        self.dim = dim

    def _vector(self, payload: bytes) -> np.ndarray:
        seed = int.from_bytes(hashlib.sha256(payload).digest()[:8], "big")
        rng = np.random.default_rng(seed)
        v = rng.standard_normal(self.dim)
        return v / np.linalg.norm(v)

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector(b"text:" + text.encode("utf-8"))

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        return self._vector(b"image:" + image.tobytes())


class ScriptedJudgeBackend:
    """Mock judge: returns queued verdict texts in order, cycling the last
    one when the queue runs dry."""

    def __init__(self, replies: list[str]):
        if not replies:
            raise ValueError("need at least one scripted reply")
        self.replies = list(replies)
        self.calls: list[list[Message]] = []

    def judge(self, messages: list[Message]) -> str:
        self.calls.append([dict(m) for m in messages])
        if len(self.replies) > 1:
            return self.replies.pop(0)
        return self.replies[0]
