"""QA evaluation harness: run a dataset through a mode, score EM/F1.

Dataset rows are JSONL objects with ``question`` and ``answers`` (and an
optional per-row ``mode``). Questions may run concurrently; the report
and per-question log are written in question order so identical runs
produce identical bytes.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

from .config import RunConfig
from .encoding import EmbedBackend
from .graph import HeteroGraph
from .llm import LLMGateway
from .local_mode import answer_local, answer_naive
from .global_mode import answer_global
from .metrics import exact_match, f1
from .usage import UsageLedger

MODES = ("naive", "local", "global")


@dataclass
class QARecord:
    question: str
    gold_answers: list[str]
    mode: str | None = None


def load_dataset(path: str | Path) -> list[QARecord]:
    records: list[QARecord] = []
    with open(path) as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            mode = obj.get("mode")
            if mode is not None and mode not in MODES:
                raise ValueError(f"unknown mode {mode!r} in dataset")
            answers = list(obj["answers"])
            if not answers:
                raise ValueError(f"record {obj['question']!r} has no gold answers")
            records.append(QARecord(obj["question"], answers, mode))
    return records


def answer_question(
    question: str,
    mode: str,
    graph: HeteroGraph,
    gateway: LLMGateway,
    embedder: EmbedBackend,
    config: RunConfig,
):
    if mode == "naive":
        return answer_naive(question, graph, gateway, embedder, config.suggest_config())
    if mode == "local":
        return answer_local(question, graph, gateway, embedder, config.local_config())
    if mode == "global":
        return answer_global(question, graph, gateway, embedder, config.global_config())
    raise ValueError(f"unknown mode {mode!r}")


def run_eval(
    records: list[QARecord],
    graph: HeteroGraph,
    gateway: LLMGateway,
    embedder: EmbedBackend,
    config: RunConfig,
    default_mode: str = "naive",
    out_dir: str | Path | None = None,
    ledger: UsageLedger | None = None,
) -> dict:
    """Answer every record, aggregate mean EM/F1, optionally write artifacts."""

    def run_one(index_record):
        index, record = index_record
        mode = record.mode or default_mode
        result = answer_question(record.question, mode, graph, gateway, embedder, config)
        return {
            "index": index,
            "question": record.question,
            "gold_answers": record.gold_answers,
            "mode": mode,
            "answer": result.answer,
            "failed": result.failed,
            "em": exact_match(result.answer, record.gold_answers),
            "f1": f1(result.answer, record.gold_answers),
        }

    if config.eval_workers > 1 and len(records) > 1:
        with ThreadPoolExecutor(max_workers=config.eval_workers) as pool:
            rows = list(pool.map(run_one, enumerate(records)))
    else:
        rows = [run_one(item) for item in enumerate(records)]
    rows.sort(key=lambda r: r["index"])

    n = len(rows)
    report = {
        "count": n,
        "exact_match": (sum(r["em"] for r in rows) / n) if n else 0.0,
        "f1": (sum(r["f1"] for r in rows) / n) if n else 0.0,
        "failed": sum(1 for r in rows if r["failed"]),
    }
    if ledger is not None:
        report["usage"] = ledger.snapshot()

    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
        with open(out / "questions.jsonl", "w") as fh:
            for row in rows:
                fh.write(json.dumps(row, sort_keys=True) + "\n")
    return report
