"""Chat backends and the gateway that turns prompts into typed results.

The gateway owns the retry-then-degrade policy: every structured prompt
gets one retry on unparseable output, after which each operation falls
back to its documented degraded behavior (fail-open for selection,ask the
original question again for follow-ups, and so on). The mock backend is a
pure function of the prompt, scriptable through ordered match rules, with
keyword-overlap defaults that keep a full pipeline runnable offline.
"""

from __future__ import annotations

import json
import logging
import os
import re
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import requests

from .errors import BackendUnavailable, ExtractionFailed, PromptParseError
from .prompts import PromptInstance, TemplateId, numbered, render
from .tokens import TokenEstimator, estimate_tokens
from .usage import UsageLedger

log = logging.getLogger(__name__)

# ledger stage per template
_STAGE: dict[TemplateId, str] = {
    TemplateId.NER: "index",
    TemplateId.PROPOSITIONS: "index",
    TemplateId.SELECT: "suggest_select",
    TemplateId.NEXTQ: "suggest_select",
    TemplateId.DECOMPOSE: "suggest_select",
    TemplateId.EVAL: "eval",
    TemplateId.FINAL_ANSWER: "answer",
    TemplateId.INTERMEDIARY_ANSWER: "answer",
    TemplateId.COMBINE_ANSWERS: "answer",
}

class _RetryableHTTP(Exception):
    """Transient server-side condition worth another attempt."""


_STOPWORDS = frozenset(
    """a an the is are was were be been am do does did have has had having of in on at to for from
    by with and or as it its this that these those which what who whom whose where when why how
    not no nor so if then than there here into over under about""".split()
)


def content_words(text: str) -> set[str]:
    return {w for w in re.findall(r"[a-z0-9]+", text.lower()) if w not in _STOPWORDS}


# ----------------------------------------------------------------------
# backends
# ----------------------------------------------------------------------


class ChatBackend:
    def complete(self, prompt: PromptInstance) -> str:
        raise NotImplementedError

    def model_name(self) -> str:
        raise NotImplementedError


@dataclass
class MockRule:
    """First-match-wins scripting rule for the mock backend.

    ``template`` restricts the rule to one template id (None matches all);
    ``contains`` must be a substring of the rendered prompt; ``slot_equals``
    requires exact slot values. ``respond`` takes precedence over
    ``response`` and allows computed completions in test code.
    """

    response: str | None = None
    template: str | None = None
    contains: str | None = None
    slot_equals: dict | None = None
    respond: Callable[[PromptInstance], str] | None = None

    def matches(self, prompt: PromptInstance) -> bool:
        if self.template is not None and prompt.template_id.value != self.template:
            return False
        if self.contains is not None and self.contains not in prompt.rendered:
            return False
        if self.slot_equals:
            for key, value in self.slot_equals.items():
                if prompt.slots.get(key) != value:
                    return False
        return True


class MockChatBackend(ChatBackend):
    """Deterministic offline backend: scripted rules plus keyword defaults.

    Rules are checked in order; the first match wins. Without a matching
    rule the backend falls back to per-template behavior that is a pure
    function of the prompt: selection keeps candidates sharing a content
    word with the question, evaluation reports insufficiency, scoring
    grants 80 to chunks overlapping the question and 0 otherwise, and the
    answer templates echo the first context line.
    """

    def __init__(self, rules: Sequence[MockRule] = ()):
        self.rules = list(rules)

    @classmethod
    def from_file(cls, path: str | Path) -> "MockChatBackend":
        """Load scripting rules from a JSON list of rule objects."""
        entries = json.loads(Path(path).read_text())
        rules = [
            MockRule(
                response=e.get("response"),
                template=e.get("template"),
                contains=e.get("contains"),
                slot_equals=e.get("slot_equals"),
            )
            for e in entries
        ]
        return cls(rules)

    def model_name(self) -> str:
        return "mock"

    def complete(self, prompt: PromptInstance) -> str:
        for rule in self.rules:
            if rule.matches(prompt):
                if rule.respond is not None:
                    return rule.respond(prompt)
                return rule.response or ""
        return self._default(prompt)

    def _default(self, prompt: PromptInstance) -> str:
        tid = prompt.template_id
        slots = prompt.slots
        if tid in (TemplateId.NER, TemplateId.PROPOSITIONS):
            return "NONE"
        if tid is TemplateId.SELECT:
            question_words = content_words(slots.get("question", ""))
            kept = []
            for line in slots.get("candidates", "").splitlines():
                m = re.match(r"\s*(\d+)[.)]\s*(.*)", line)
                if not m:
                    continue
                if question_words & content_words(m.group(2)):
                    kept.append(m.group(1))
            return "KEEP: " + (", ".join(kept) if kept else "none")
        if tid is TemplateId.EVAL:
            return "INSUFFICIENT"
        if tid in (TemplateId.NEXTQ, TemplateId.DECOMPOSE):
            return f"1. {slots.get('question', '')}"
        if tid is TemplateId.INTERMEDIARY_ANSWER:
            question_words = content_words(slots.get("question", ""))
            for line in slots.get("context", "").splitlines():
                if question_words & content_words(line):
                    return f"SCORE: 80\nANSWER: {line.strip()}"
            return "SCORE: 0\nANSWER:"
        # FinalAnswer / CombineAnswers
        for line in slots.get("context", "").splitlines():
            if line.strip():
                return line.strip()
        return slots.get("question", "")


class OpenAICompatChatBackend(ChatBackend):
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint.

    ``max_concurrency`` bounds in-flight requests across threads.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        temperature: float = 0.0,
        timeout: float = 120.0,
        max_retries: int = 3,
        backoff: float = 1.0,
        max_concurrency: int = 4,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._api_key = api_key or os.environ.get(api_key_env, "")
        self.temperature = temperature
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._gate = threading.Semaphore(max_concurrency)
        self._session = requests.Session()

    def model_name(self) -> str:
        return self.model

    def complete(self, prompt: PromptInstance) -> str:
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt.rendered}],
            "temperature": self.temperature,
        }
        last_err: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                with self._gate:
                    resp = self._session.post(
                        f"{self.base_url}/chat/completions", json=payload, headers=headers, timeout=self.timeout
                    )
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise _RetryableHTTP(f"status {resp.status_code}")
                if resp.status_code >= 400:  # permanent: bad request/auth, do not retry
                    raise BackendUnavailable(f"chat endpoint returned {resp.status_code}")
                return resp.json()["choices"][0]["message"]["content"]
            except (_RetryableHTTP, requests.RequestException, KeyError, IndexError, ValueError) as err:
                last_err = err
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * 2.0**attempt)
        raise BackendUnavailable(f"chat request failed after {self.max_retries} attempts: {last_err}")


# ----------------------------------------------------------------------
# structured-output parsers
# ----------------------------------------------------------------------

_ITEM_RE = re.compile(r"^\s*(?:\d+[.)]|[-*])\s*(.+?)\s*$")
_NONE_RE = re.compile(r"^\s*\(?none\)?\s*$", re.IGNORECASE)
_KEEP_RE = re.compile(r"keep\s*:\s*(.*)", re.IGNORECASE)
_SCORE_RE = re.compile(r"score\s*:\s*(-?\d+)", re.IGNORECASE)
_ANSWER_RE = re.compile(r"answer\s*:\s*(.*)", re.IGNORECASE | re.DOTALL)


def parse_numbered(text: str) -> list[str] | None:
    """Items from a numbered/bulleted list; [] for NONE; None if unparseable."""
    items: list[str] = []
    saw_none = False
    for line in text.splitlines():
        if _NONE_RE.match(line):
            saw_none = True
            continue
        m = _ITEM_RE.match(line)
        if m and m.group(1):
            items.append(m.group(1))
    if items:
        return items
    if saw_none:
        return []
    return None


def parse_keep(text: str, n_candidates: int) -> list[int] | None:
    """Zero-based kept indices from a "KEEP: 1, 3" line; None if unparseable."""
    for line in text.splitlines():
        m = _KEEP_RE.search(line)
        if not m:
            continue
        body = m.group(1).strip()
        if _NONE_RE.match(body) or body.lower().startswith("none"):
            return []
        nums = re.findall(r"\d+", body)
        if not nums:
            return None
        kept = sorted({int(x) - 1 for x in nums if 1 <= int(x) <= n_candidates})
        return kept
    return None


@dataclass
class SelectVerdict:
    kept: list[int]
    pruned: list[int]


@dataclass
class EvalVerdict:
    sufficient: bool
    answer: str = ""


def parse_eval(text: str) -> EvalVerdict | None:
    for line in text.splitlines():
        stripped = line.strip()
        if stripped.upper().startswith("SUFFICIENT"):
            _, _, rest = stripped.partition(":")
            return EvalVerdict(True, rest.strip())
        if stripped.upper().startswith("INSUFFICIENT"):
            return EvalVerdict(False)
    return None


def parse_scored_answer(text: str) -> tuple[str, int] | None:
    m = _SCORE_RE.search(text)
    if not m:
        return None
    score = max(0, min(100, int(m.group(1))))
    am = _ANSWER_RE.search(text)
    answer = am.group(1).strip() if am else ""
    return answer, score


# ----------------------------------------------------------------------
# gateway
# ----------------------------------------------------------------------


class LLMGateway:
    """Typed operations over a chat backend, with usage accounting."""

    def __init__(
        self,
        backend: ChatBackend,
        ledger: UsageLedger | None = None,
        max_subquestions: int = 3,
        token_estimator: TokenEstimator = estimate_tokens,
    ):
        self.backend = backend
        self.ledger = ledger
        self.max_subquestions = max_subquestions
        self._estimate = token_estimator

    def _complete(self, template_id: TemplateId, **slots: str) -> str:
        prompt = render(template_id, **slots)
        completion = self.backend.complete(prompt)
        if self.ledger is not None:
            self.ledger.add(_STAGE[template_id], self._estimate(prompt.rendered), self._estimate(completion))
        return completion

    def _complete_parsed(self, template_id: TemplateId, parser: Callable[[str], object], **slots: str):
        """One retry on unparseable output, then raise PromptParseError."""
        completion = self._complete(template_id, **slots)
        parsed = parser(completion)
        if parsed is None:
            completion = self._complete(template_id, **slots)
            parsed = parser(completion)
        if parsed is None:
            raise PromptParseError(f"{template_id.value}: unparseable completion: {completion[:200]!r}")
        return parsed

    # -- indexing prompts ------------------------------------------------

    def extract_entities(self, passage_text: str) -> list[str]:
        if not passage_text:
            raise ValueError("passage text must be non-empty")
        try:
            items = self._complete_parsed(TemplateId.NER, parse_numbered, passage=passage_text)
        except PromptParseError as err:
            raise ExtractionFailed(str(err)) from err
        seen: set[str] = set()
        out: list[str] = []
        for item in items:
            key = item.lower()
            if key not in seen:
                seen.add(key)
                out.append(item)
        return out

    def extract_propositions(self, passage_text: str, entities: list[str]) -> list[tuple[str, list[str]]]:
        entity_field = "; ".join(entities) if entities else "(none)"
        try:
            items = self._complete_parsed(
                TemplateId.PROPOSITIONS, parse_numbered, passage=passage_text, entities=entity_field
            )
        except PromptParseError as err:
            raise ExtractionFailed(str(err)) from err
        by_lower = {e.lower(): e for e in entities}
        out: list[tuple[str, list[str]]] = []
        for item in items:
            text, _, tail = item.rpartition("|")
            if not text:  # no separator: statement with no entities
                text, tail = item, ""
            text = text.strip()
            if not text:
                continue
            refs: list[str] = []
            for name in (s.strip() for s in tail.split(";")):
                if not name:
                    continue
                matched = by_lower.get(name.lower())
                if matched is None:
                    log.warning("dropping unknown entity %r cited by %r", name, text)
                elif matched not in refs:
                    refs.append(matched)
            out.append((text, refs))
        return out

    # -- retrieval prompts -----------------------------------------------

    def select_relevant(self, query: str, candidates: list[str]) -> SelectVerdict:
        """Partition candidates into kept/pruned; keeps everything on parse failure."""
        if not candidates:
            raise ValueError("candidate list must be non-empty")
        try:
            kept = self._complete_parsed(
                TemplateId.SELECT,
                lambda text: parse_keep(text, len(candidates)),
                question=query,
                candidates=numbered(candidates),
            )
        except PromptParseError:
            kept = list(range(len(candidates)))
        kept_set = set(kept)
        return SelectVerdict(
            kept=[i for i in range(len(candidates)) if i in kept_set],
            pruned=[i for i in range(len(candidates)) if i not in kept_set],
        )

    def evaluate_answerable(self, q_start: str, facts: list[str]) -> EvalVerdict:
        try:
            return self._complete_parsed(
                TemplateId.EVAL, parse_eval, question=q_start, facts=numbered(facts)
            )
        except PromptParseError:
            return EvalVerdict(False)

    def next_questions(self, q_start: str, facts: list[str]) -> list[str]:
        try:
            items = self._complete_parsed(
                TemplateId.NEXTQ,
                parse_numbered,
                question=q_start,
                facts=numbered(facts),
                max_questions=str(self.max_subquestions),
            )
        except PromptParseError:
            return [q_start]
        items = [q for q in items if q.strip()][: self.max_subquestions]
        return items or [q_start]

    def decompose(self, q_start: str, m: int) -> list[str]:
        if m < 1:
            raise ValueError("m must be >= 1")
        try:
            items = self._complete_parsed(
                TemplateId.DECOMPOSE, parse_numbered, question=q_start, count=str(m)
            )
        except PromptParseError:
            return [q_start] * m
        items = [q for q in items if q.strip()][:m]
        while len(items) < m:
            items.append(q_start)
        return items

    # -- answer prompts ----------------------------------------------------

    def intermediary_answer(self, q_start: str, chunk: str) -> tuple[str, int]:
        try:
            return self._complete_parsed(
                TemplateId.INTERMEDIARY_ANSWER, parse_scored_answer, question=q_start, context=chunk
            )
        except PromptParseError:
            return "", 0

    def final_answer(self, q_start: str, context: Sequence[str], combine: bool = False) -> str:
        template = TemplateId.COMBINE_ANSWERS if combine else TemplateId.FINAL_ANSWER
        return self._complete(template, question=q_start, context="\n".join(context))
