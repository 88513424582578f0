"""Token usage accounting, bucketed by pipeline stage."""

from __future__ import annotations

import threading

STAGES = ("index", "suggest_select", "eval", "answer")


class UsageLedger:
    """Thread-safe monotone counters of prompt/completion tokens per stage."""

    def __init__(self) -> None:
        self._lock = threading.Lock()
        self._prompt: dict[str, int] = {s: 0 for s in STAGES}
        self._completion: dict[str, int] = {s: 0 for s in STAGES}

    def add(self, stage: str, prompt_tokens: int, completion_tokens: int) -> None:
        if stage not in self._prompt:
            raise KeyError(f"unknown stage {stage!r}")
        with self._lock:
            self._prompt[stage] += int(prompt_tokens)
            self._completion[stage] += int(completion_tokens)

    def snapshot(self) -> dict:
        with self._lock:
            stages = {
                s: {"prompt_tokens": self._prompt[s], "completion_tokens": self._completion[s]}
                for s in STAGES
            }
        stages["total"] = {
            "prompt_tokens": sum(v["prompt_tokens"] for v in stages.values()),
            "completion_tokens": sum(v["completion_tokens"] for v in stages.values()),
        }
        return stages
