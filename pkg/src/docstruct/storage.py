"""File-backed persistence: an append-only JSON event log that fsyncs before
acknowledging, and a directory of versioned model snapshots. Restart recovery
replays the log; a torn final line from a crash mid-write is ignored."""

from __future__ import annotations

import json
import os
import threading
from pathlib import Path

from .classifier import GroupedClassifier
from .layout import canonical_json


class EventLog:
    """One JSON object per line. append() returns only after the bytes are
    flushed and fsynced, so an acknowledged event survives a crash."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self._fh = open(self.path, "a", encoding="utf-8")

    def append(self, event: dict) -> None:
        line = canonical_json(event)
        with self._lock:
            self._fh.write(line + "\n")
            self._fh.flush()
            os.fsync(self._fh.fileno())

    def replay(self) -> list[dict]:
        events = []
        if not self.path.exists():
            return events
        with open(self.path, "r", encoding="utf-8") as f:
            for line in f:
                line = line.strip()
                if not line:
                    continue
                try:
                    events.append(json.loads(line))
                except json.JSONDecodeError:
                    # torn tail write from a crash; everything acknowledged
                    # was fsynced as a complete line before this one
                    break
        return events

    def close(self) -> None:
        with self._lock:
            self._fh.close()


class ModelStore:
    """models/v<N>.json snapshots; writes go through a temp file + rename so a
    crash never leaves a half-written snapshot under a live name."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path_for(self, version: int) -> Path:
        return self.directory / f"v{version}.json"

    def save(self, model: GroupedClassifier, version: int) -> Path:
        target = self.path_for(version)
        tmp = target.with_suffix(".json.tmp")
        tmp.write_text(json.dumps(model.to_dict()), encoding="utf-8")
        os.replace(tmp, target)
        return target

    def load(self, version: int) -> GroupedClassifier:
        path = self.path_for(version)
        if not path.exists():
            raise FileNotFoundError(f"no model snapshot for version {version}")
        return GroupedClassifier.load(path)

    def versions(self) -> list[int]:
        out = []
        for p in self.directory.glob("v*.json"):
            try:
                out.append(int(p.stem[1:]))
            except ValueError:
                continue
        return sorted(out)
