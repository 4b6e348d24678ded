"""Disk-backed response cache for detection calls, keyed by (model, template, prompt)."""

from __future__ import annotations

import json
import threading
import time
from pathlib import Path


class ResponseCache:
    """Append-only JSON-lines cache; later records for a key win.

    Reads serve from an in-memory snapshot and take no lock; writes are
    serialized and flushed to disk immediately when a path is configured.
    """

    def __init__(self, path: str | Path | None = None):
        self.path = Path(path) if path else None
        self._data: dict[tuple[str, str, str], str] = {}
        self._lock = threading.Lock()
        if self.path is not None and self.path.exists():
            for line in self.path.read_text("utf-8").splitlines():
                if not line.strip():
                    continue
                rec = json.loads(line)
                self._data[tuple(rec["key"])] = rec["raw"]

    def get(self, model: str, template_hash: str, prompt: str) -> str | None:
        return self._data.get((model, template_hash, prompt))

    def put(self, model: str, template_hash: str, prompt: str, raw: str) -> None:
        key = (model, template_hash, prompt)
        with self._lock:
            self._data[key] = raw
            if self.path is not None:
                self.path.parent.mkdir(parents=True, exist_ok=True)
                with self.path.open("a", encoding="utf-8") as fh:
                    fh.write(
                        json.dumps({"key": list(key), "raw": raw, "ts": time.time()})
                        + "\n"
                    )

    def __len__(self) -> int:
        return len(self._data)
