"""Iterative suggestion-selection answering for factoid and multi-hop queries.

The loop seeds a proposition pool from similarity search, then repeatedly
walks the graph from the pool, prunes suggestions with LLM feedback, and
checks whether the accumulated facts suffice to answer. Insufficient
rounds generate follow-up questions that steer the next round. Everything
is recorded on a trace so runs are auditable and reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .encoding import EmbedBackend
from .graph import HeteroGraph
from .llm import LLMGateway
from .suggest import PoolEntry, PropositionPool, SuggestConfig, select, suggest_local, suggest_naive
from .trace import Trace


@dataclass
class LocalRunConfig:
    max_iter: int = 3
    suggest: SuggestConfig = field(default_factory=SuggestConfig)

    def __post_init__(self) -> None:
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")


@dataclass
class LocalResult:
    answer: str
    failed: bool
    trace: Trace
    collected: PropositionPool


def answer_naive(
    q_start: str,
    graph: HeteroGraph,
    gateway: LLMGateway,
    embedder: EmbedBackend,
    cfg: SuggestConfig | None = None,
) -> LocalResult:
    """Answer from top-k similar propositions; no graph, no selection."""
    cfg = cfg or SuggestConfig()
    trace = Trace()
    suggested = suggest_naive(embedder.embed_one(q_start), graph, cfg)
    trace.log("seed", query=q_start, suggested=suggested, kept=suggested)
    answer = gateway.final_answer(q_start, graph.proposition_texts(suggested))
    trace.log("result", answer=answer, failed=False, exhausted=False, iterations=0)
    pool = PropositionPool(PoolEntry(p, seed_round=True) for p in suggested)
    return LocalResult(answer, False, trace, pool)


def answer_local(
    q_start: str,
    graph: HeteroGraph,
    gateway: LLMGateway,
    embedder: EmbedBackend,
    cfg: LocalRunConfig | None = None,
) -> LocalResult:
    """Suggestion-selection cycles with sufficiency checks and follow-ups.

    Seeding: similarity search for the starting question, pruned by
    selection, checked once for sufficiency before any walk. Each
    iteration then walks from the current pool once per active question,
    prunes, folds the survivors into the collected set, and re-checks
    sufficiency; follow-up questions steer the next iteration. When the
    iteration budget runs out a best-effort answer is still produced from
    the collected facts, flagged as exhausted on the trace.
    """
    cfg = cfg or LocalRunConfig()
    trace = Trace()

    seeded = suggest_naive(embedder.embed_one(q_start), graph, cfg.suggest)
    seed_kept = select(q_start, seeded, graph, gateway)
    trace.log("seed", query=q_start, suggested=seeded, kept=seed_kept)

    s_pool = PropositionPool(PoolEntry(p, seed_round=True) for p in seed_kept)
    s_loc = s_pool.copy()

    verdict = gateway.evaluate_answerable(q_start, graph.proposition_texts(s_loc.ids()))
    trace.log("eval", after_iteration=0, sufficient=verdict.sufficient, answer=verdict.answer)
    if verdict.sufficient:
        trace.log("result", answer=verdict.answer, failed=False, exhausted=False, iterations=0)
        return LocalResult(verdict.answer, False, trace, s_loc)

    questions = [q_start]
    s_pool_new = s_pool.copy()
    iteration = 0
    while iteration < cfg.max_iter:
        iteration += 1
        if not len(s_pool):
            trace.log("pool_empty", iteration=iteration)
            break
        judged_this_iter: set[int] = set(s_pool_new.ids())
        for q_index, question in enumerate(questions):
            suggested = suggest_local(embedder.embed_one(question), graph, s_pool, cfg.suggest)
            candidates = [c for c in suggested if c not in judged_this_iter]
            judged_this_iter.update(candidates)
            kept = select(question, candidates, graph, gateway) if candidates else []
            for prop in kept:
                s_pool_new.add_id(prop, iteration=iteration, query_index=q_index)
            trace.log(
                "suggest",
                iteration=iteration,
                query_index=q_index,
                query=question,
                suggested=suggested,
                candidates=candidates,
                kept=kept,
            )
        for prop in s_pool_new:
            s_loc.add(s_pool_new.entry(prop))
        s_pool = s_pool_new
        s_pool_new = PropositionPool()

        verdict = gateway.evaluate_answerable(q_start, graph.proposition_texts(s_loc.ids()))
        trace.log("eval", after_iteration=iteration, sufficient=verdict.sufficient, answer=verdict.answer)
        if verdict.sufficient:
            trace.log("result", answer=verdict.answer, failed=False, exhausted=False, iterations=iteration)
            return LocalResult(verdict.answer, False, trace, s_loc)
        questions = gateway.next_questions(q_start, graph.proposition_texts(s_loc.ids()))
        trace.log("next_questions", iteration=iteration, questions=questions)

    answer = gateway.final_answer(q_start, graph.proposition_texts(s_loc.ids()))
    trace.log("result", answer=answer, failed=True, exhausted=True, iterations=iteration)
    return LocalResult(answer, True, trace, s_loc)
