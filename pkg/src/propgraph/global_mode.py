"""Community-grounded answering for abstract, multi-faceted questions.

Anchors are collected breadth-first: the question is decomposed into
facet sub-queries, each seeds the pool via similarity search plus
selection, and further rounds give every pooled proposition its own
relevance-feedback-refined query and its own walk. The anchors then pick
graph communities under a node budget; community content is chunked,
partially answered, and the ranked partial answers are arranged with the
strongest material at the edges of the final context before synthesis.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence, TypeVar

import networkx as nx
import numpy as np

from .community import leiden_levels
from .encoding import EmbedBackend
from .graph import HeteroGraph, NodeId, NodeKind, proposition_id
from .llm import LLMGateway
from .suggest import PropositionPool, SuggestConfig, select, suggest_global, suggest_naive
from .tokens import estimate_tokens, truncate_to_tokens
from .trace import Trace

T = TypeVar("T")


@dataclass
class GlobalRunConfig:
    breadth_m: int = 10
    min_facts: int = 200
    max_iter: int = 3
    node_budget: int = 8000
    min_community_size: int = 10
    max_community_size: int = 150
    rocchio_alpha: float = 1.0
    rocchio_beta: float = 0.7
    rocchio_gamma: float = 0.15
    max_tokens_report: int = 8000
    passage_token_limit: int = 500
    max_tokens_community_chunks: int = 8000
    leiden_seed: int = 0
    leiden_resolution: float = 1.0
    suggest: SuggestConfig = field(default_factory=SuggestConfig)

    def __post_init__(self) -> None:
        for name in (
            "breadth_m",
            "min_facts",
            "max_iter",
            "node_budget",
            "min_community_size",
            "max_community_size",
            "max_tokens_report",
            "passage_token_limit",
            "max_tokens_community_chunks",
        ):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.min_community_size > self.max_community_size:
            raise ValueError("community size bounds out of order")
        if min(self.rocchio_alpha, self.rocchio_beta, self.rocchio_gamma) < 0:
            raise ValueError("feedback coefficients must be non-negative")


@dataclass
class WalkRecord:
    """What one suggestion round kept for later query refinement.

    ``walker_pis`` is None for seeding rounds, where the "walker" was a
    plain similarity search and its query stands in for the walk origin.
    """

    queries: list[np.ndarray]
    walker_pis: list[dict[int, float]] | None
    suggested: list[int]
    kept: list[int]
    pruned: list[int]


@dataclass
class QueryState:
    """Per-anchor refined query and the feedback components that built it."""

    anchor: int
    q_origin: np.ndarray
    q_positive: np.ndarray
    q_negative: np.ndarray
    q_raw: np.ndarray
    q: np.ndarray
    n_sources: int


@dataclass
class Community:
    id: int
    nodes: frozenset[NodeId]
    level: int

    @property
    def size(self) -> int:
        return len(self.nodes)


@dataclass
class AnchorCollection:
    pool: PropositionPool
    iterations: int
    query_states: list[dict[int, QueryState]] = field(default_factory=list)


@dataclass
class GlobalResult:
    answer: str
    failed: bool
    trace: Trace
    collected: PropositionPool


def compute_queries(
    pool: PropositionPool,
    records: dict[int, list["WalkRecord"]],
    graph: HeteroGraph,
    cfg: GlobalRunConfig,
) -> dict[int, QueryState]:
    """Refine one query vector per pooled proposition from walk feedback.

    The origin component averages, over every round that surfaced the
    proposition, the query of the walker most likely to have reached it;
    the positive component is the proposition's own embedding; the
    negative component averages the mean embeddings of what selection
    pruned in those rounds. The combination alpha*origin + beta*positive
    - gamma*negative is renormalized to unit length for downstream cosine.
    """
    states: dict[int, QueryState] = {}
    embeddings = graph.proposition_embeddings.astype(np.float64)
    dim = embeddings.shape[1]
    for prop in pool:
        q_positive = embeddings[prop]
        origin_parts: list[np.ndarray] = []
        negative_parts: list[np.ndarray] = []
        for rec in records.get(prop, []):
            if rec.walker_pis is None:
                origin_parts.append(np.asarray(rec.queries[0], dtype=np.float64))
            else:
                visits = [pis.get(prop, 0.0) for pis in rec.walker_pis]
                best = int(np.argmax(visits))  # ties resolve to the lowest walker index
                origin_parts.append(np.asarray(rec.queries[best], dtype=np.float64))
            if rec.pruned:
                negative_parts.append(embeddings[rec.pruned].mean(axis=0))
            else:
                negative_parts.append(np.zeros(dim))
        if origin_parts:
            q_origin = np.mean(origin_parts, axis=0)
            q_negative = np.mean(negative_parts, axis=0)
        else:  # no recorded round: fall back to the proposition itself
            q_origin = q_positive.copy()
            q_negative = np.zeros(dim)
        q_raw = cfg.rocchio_alpha * q_origin + cfg.rocchio_beta * q_positive - cfg.rocchio_gamma * q_negative
        norm = float(np.linalg.norm(q_raw))
        q = q_raw / norm if norm > 0 else q_positive.copy()
        states[prop] = QueryState(prop, q_origin, q_positive, q_negative, q_raw, q, len(origin_parts))
    return states


def partition_pool(pool: PropositionPool | Sequence[int], m: int) -> list[list[int]]:
    """Round-robin split by insertion order into m parts (sizes differ by <= 1)."""
    if m < 1:
        raise ValueError("m must be >= 1")
    ids = pool.ids() if isinstance(pool, PropositionPool) else list(pool)
    return [ids[j::m] for j in range(m)]


def collect_anchors(
    q_start: str,
    graph: HeteroGraph,
    gateway: LLMGateway,
    embedder: EmbedBackend,
    cfg: GlobalRunConfig,
    trace: Trace | None = None,
) -> AnchorCollection:
    """Iterative breadth-first anchor gathering.

    Seeds the pool from decomposed facet queries, then loops - refine
    queries, partition the pool, walk each partition, select - until
    ``min_facts`` anchors are collected, the iteration budget is spent,
    or a round keeps nothing (an empty pool cannot seed further walks).
    """
    trace = trace if trace is not None else Trace()
    subqueries = gateway.decompose(q_start, cfg.breadth_m)
    trace.log("decompose", questions=subqueries)

    s_pool = PropositionPool()
    s_glb = PropositionPool()
    records: dict[int, list[WalkRecord]] = {}
    for q_index, question in enumerate(subqueries):
        q_vec = np.asarray(embedder.embed_one(question), dtype=np.float64)
        suggested = suggest_naive(q_vec, graph, cfg.suggest)
        kept = select(question, suggested, graph, gateway)
        kept_set = set(kept)
        rec = WalkRecord([q_vec], None, suggested, kept, [c for c in suggested if c not in kept_set])
        for prop in kept:
            s_pool.add_id(prop, seed_round=True, query_index=q_index)
            s_glb.add_id(prop, seed_round=True, query_index=q_index)
            records.setdefault(prop, []).append(rec)
        trace.log("seed", query_index=q_index, query=question, suggested=suggested, kept=kept)

    history = AnchorCollection(s_glb, 0)
    iteration = 0
    while len(s_glb) < cfg.min_facts and iteration < cfg.max_iter and len(s_pool) > 0:
        iteration += 1
        states = compute_queries(s_pool, records, graph, cfg)
        history.query_states.append(states)
        s_pool_new = PropositionPool()
        new_records: dict[int, list[WalkRecord]] = {}
        for part_index, part in enumerate(partition_pool(s_pool, cfg.breadth_m)):
            if not part:
                continue
            walk_queries = [(prop, states[prop].q) for prop in part]
            suggested, walker_pis = suggest_global(walk_queries, graph, cfg.suggest, exclude=s_glb.ids())
            kept = select(q_start, suggested, graph, gateway) if suggested else []
            kept_set = set(kept)
            rec = WalkRecord(
                [states[prop].q for prop in part],
                walker_pis,
                suggested,
                kept,
                [c for c in suggested if c not in kept_set],
            )
            for prop in kept:
                s_pool_new.add_id(prop, iteration=iteration, query_index=part_index)
                new_records.setdefault(prop, []).append(rec)
            trace.log(
                "explore",
                iteration=iteration,
                partition=part_index,
                members=part,
                suggested=suggested,
                kept=kept,
            )
        for prop in s_pool_new:
            s_glb.add(s_pool_new.entry(prop))
        s_pool = s_pool_new
        records = new_records
        trace.log("collected", iteration=iteration, anchors=len(s_glb), pool=len(s_pool))
    history.iterations = iteration
    return history


def detect_communities(
    graph: HeteroGraph,
    min_size: int = 10,
    max_size: int = 150,
    seed: int = 0,
    resolution: float = 1.0,
) -> list[Community]:
    """Leiden communities over the whole graph, all levels, size-filtered.

    Identical node sets appearing at several levels are reported once.
    Ids are assigned in (level, lowest-node) order so they are stable for
    a fixed graph and seed.
    """
    nxg = nx.Graph()
    nxg.add_nodes_from(graph.node_order)
    nxg.add_edges_from(graph.edges())
    communities: list[Community] = []
    seen: set[frozenset[NodeId]] = set()
    for level, partition in enumerate(leiden_levels(nxg, resolution=resolution, seed=seed)):
        for nodes in sorted(partition, key=min):
            block = frozenset(nodes)
            if block in seen:
                continue
            seen.add(block)
            if min_size <= len(block) <= max_size:
                communities.append(Community(len(communities), block, level))
    return communities


def select_communities(
    anchors: set[NodeId], candidates: Sequence[Community], budget: int
) -> list[Community]:
    """Greedy budgeted cover of the anchors by communities.

    Each step picks the community with the highest count of still-uncovered
    anchors per node (ties: smaller community, then lower id), accruing its
    size against the budget. Stops once every coverable anchor is covered,
    the budget is spent, or candidates run out; the final pick may overshoot
    the budget by at most its own size.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    coverable = anchors & set().union(*(c.nodes for c in candidates)) if candidates else set()
    covered: set[NodeId] = set()
    remaining = list(candidates)
    chosen: list[Community] = []
    used = 0
    while covered != coverable and used < budget and remaining:
        best = max(
            remaining,
            key=lambda c: (len((c.nodes & anchors) - covered) / c.size, -c.size, -c.id),
        )
        remaining.remove(best)
        chosen.append(best)
        covered |= best.nodes & anchors
        used += best.size
    return chosen


def build_reports(
    chosen: Sequence[Community], graph: HeteroGraph, cfg: GlobalRunConfig
) -> list[str]:
    """Render chosen communities to text and split into token-bounded chunks.

    Per community: entity names, proposition texts, then passages
    truncated to the per-passage token limit. The concatenation is packed
    into chunks no larger than ``max_tokens_community_chunks``.
    """
    lines: list[str] = []
    for community in chosen:
        entities = sorted(n.index for n in community.nodes if n.kind is NodeKind.ENTITY)
        props = sorted(n.index for n in community.nodes if n.kind is NodeKind.PROPOSITION)
        passages = sorted(n.index for n in community.nodes if n.kind is NodeKind.PASSAGE)
        lines.append(f"## Community {community.id}")
        if entities:
            lines.append("Entities: " + "; ".join(graph.entities[i].canonical_name for i in entities))
        if props:
            lines.append("Facts:")
            lines.extend(f"- {graph.propositions[i].text}" for i in props)
        if passages:
            lines.append("Passages:")
            lines.extend(
                f"- {truncate_to_tokens(graph.passages[i].text, cfg.passage_token_limit)}"
                for i in passages
            )
    return _pack_lines(lines, cfg.max_tokens_community_chunks)


def _pack_lines(lines: Sequence[str], limit: int) -> list[str]:
    pieces: list[str] = []
    for line in lines:
        if estimate_tokens(line) <= limit:
            pieces.append(line)
            continue
        words = line.split()
        step = max(1, int(limit / 1.3))
        pieces.extend(" ".join(words[i : i + step]) for i in range(0, len(words), step))
    chunks: list[str] = []
    current: list[str] = []
    current_tokens = 0
    for piece in pieces:
        t = estimate_tokens(piece)
        if current and current_tokens + t > limit:
            chunks.append("\n".join(current))
            current = []
            current_tokens = 0
        current.append(piece)
        current_tokens += t
    if current:
        chunks.append("\n".join(current))
    return chunks


def interleave_extremes(items: Sequence[T]) -> list[T]:
    """Arrange ranked items so the strongest sit at both edges.

    Rank 1 leads, rank 2 closes, and later ranks fill toward the middle:
    [1, 2, 3, 4, 5] becomes [1, 3, 5, 4, 2]. This counteracts the
    weakness of long-context models at attending to mid-context material.
    """
    front: list[T] = []
    back: list[T] = []
    for i, item in enumerate(items):
        (front if i % 2 == 0 else back).append(item)
    return front + back[::-1]


def _fit_to_budget(items: Sequence[str], limit: int) -> list[str]:
    kept: list[str] = []
    total = 0
    for item in items:
        t = estimate_tokens(item)
        if kept and total + t > limit:
            break
        kept.append(item)
        total += t
    return kept


def answer_global(
    q_start: str,
    graph: HeteroGraph,
    gateway: LLMGateway,
    embedder: EmbedBackend,
    cfg: GlobalRunConfig | None = None,
) -> GlobalResult:
    """End-to-end abstract-question answering.

    Collect anchors, detect and select communities, generate one scored
    partial answer per community chunk, then synthesize the final answer
    from the ranked partial answers arranged best-at-the-edges. With no
    eligible community the anchors' own texts serve as the context.
    """
    cfg = cfg or GlobalRunConfig()
    trace = Trace()
    collection = collect_anchors(q_start, graph, gateway, embedder, cfg, trace)
    anchor_ids = collection.pool.ids()

    candidates = detect_communities(
        graph,
        cfg.min_community_size,
        cfg.max_community_size,
        seed=cfg.leiden_seed,
        resolution=cfg.leiden_resolution,
    )
    anchor_nodes = {proposition_id(i) for i in anchor_ids}
    chosen = select_communities(anchor_nodes, candidates, cfg.node_budget) if candidates else []
    trace.log(
        "communities",
        candidates=len(candidates),
        chosen=[c.id for c in chosen],
        sizes=[c.size for c in chosen],
    )

    if chosen:
        chunks = build_reports(chosen, graph, cfg)
        scored: list[tuple[int, int, str]] = []
        for chunk_index, chunk_text in enumerate(chunks):
            answer, score = gateway.intermediary_answer(q_start, chunk_text)
            scored.append((score, chunk_index, answer))
        ranked = sorted(scored, key=lambda item: (-item[0], item[1]))
        trace.log("intermediary", scores=[s for s, _, _ in ranked], chunks=len(chunks))
        answers = [answer for _, _, answer in ranked if answer.strip()]
        kept = _fit_to_budget(answers, cfg.max_tokens_report)
        context = interleave_extremes(kept)
        answer = gateway.final_answer(q_start, context, combine=True)
    else:
        texts = _fit_to_budget(graph.proposition_texts(anchor_ids), cfg.max_tokens_report)
        trace.log("anchor_fallback", facts=len(texts))
        answer = gateway.final_answer(q_start, texts, combine=False)

    trace.log("result", answer=answer, failed=False, anchors=len(anchor_ids), iterations=collection.iterations)
    return GlobalResult(answer, False, trace, collection.pool)
