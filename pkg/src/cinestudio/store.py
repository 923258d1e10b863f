"""Filesystem persistence for the pipeline service.

Layout under one root: plans/ (JSON), scenes/ (sheet + frame PNGs with
sidecars), reports/ (JSON + CSV), jobs/ (JSON), surveys/, blobs/
(content-addressed by SHA-256). Every JSON and PNG write goes through a
temp file plus atomic rename, so a crash can never leave a readable
half-written artifact."""

from __future__ import annotations

import hashlib
import json
import os
import secrets
import tempfile
import threading
import time
from pathlib import Path

_CROCKFORD = "0123456789ABCDEFGHJKMNPQRSTVWXYZ"


def new_ulid() -> str:
    """128-bit ULID: 48-bit millisecond timestamp + 80 random bits, Crockford
    base32, lexicographically sortable by creation time."""
    value = (int(time.time() * 1000) & ((1 << 48) - 1)) << 80 | secrets.randbits(80)
    chars = []
    for _ in range(26):
        chars.append(_CROCKFORD[value & 31])
        value >>= 5
    return "".join(reversed(chars))


class Store:
    SUBDIRS = ("plans", "scenes", "reports", "jobs", "surveys", "blobs")

    def __init__(self, root):
        self.root = Path(root)
        for sub in self.SUBDIRS:
            (self.root / sub).mkdir(parents=True, exist_ok=True)
        self._locks: dict[str, threading.Lock] = {}
        self._locks_guard = threading.Lock()

    def lock(self, entity_id: str) -> threading.Lock:
        with self._locks_guard:
            return self._locks.setdefault(entity_id, threading.Lock())

    # --- atomic primitives ---

    def write_bytes(self, relpath: str, data: bytes) -> Path:
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=".tmp-")
        try:
            with os.fdopen(fd, "wb") as fh:
                fh.write(data)
                fh.flush()
                os.fsync(fh.fileno())
            os.replace(tmp, path)
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise
        return path

    def write_json(self, relpath: str, payload) -> Path:
        return self.write_bytes(relpath, (json.dumps(payload, indent=2) + "\n").encode("utf-8"))

    def read_json(self, relpath: str):
        return json.loads((self.root / relpath).read_text(encoding="utf-8"))

    def read_bytes(self, relpath: str) -> bytes:
        return (self.root / relpath).read_bytes()

    def exists(self, relpath: str) -> bool:
        return (self.root / relpath).exists()

    def append_line(self, relpath: str, line: str) -> None:
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        with self.lock(relpath):
            with open(path, "a", encoding="utf-8") as fh:
                fh.write(line.rstrip("\n") + "\n")
                fh.flush()
                os.fsync(fh.fileno())

    def read_lines(self, relpath: str) -> list[str]:
        path = self.root / relpath
        if not path.exists():
            return []
        return [ln for ln in path.read_text(encoding="utf-8").splitlines() if ln.strip()]

    # --- content-addressed blobs ---

    def put_blob(self, data: bytes) -> str:
        digest = hashlib.sha256(data).hexdigest()
        path = self.root / "blobs" / digest
        if not path.exists():
            self.write_bytes(f"blobs/{digest}", data)
        return digest

    def get_blob(self, digest: str) -> bytes:
        return (self.root / "blobs" / digest).read_bytes()
