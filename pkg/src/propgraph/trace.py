"""Run trace: an ordered, JSON-serializable event log."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path


@dataclass
class Trace:
    events: list[dict] = field(default_factory=list)

    def log(self, event: str, **payload) -> None:
        self.events.append({"event": event, **payload})

    def of_kind(self, event: str) -> list[dict]:
        return [e for e in self.events if e["event"] == event]

    def write_jsonl(self, path: str | Path) -> None:
        with open(path, "w") as fh:
            for event in self.events:
                fh.write(json.dumps(event, sort_keys=True) + "\n")
