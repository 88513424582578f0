"""Candidate-proposition suggestion and LLM-feedback selection.

Three suggestion flavors share one contract: return at most ``k`` fresh
proposition ids, ranked, never re-proposing seeds or caller-excluded ids.
``suggest_naive`` is pure similarity search; ``suggest_local`` walks a
seed-anchored subgraph with one blended operator; ``suggest_global`` runs
one walk per pool member inside a shared subgraph and aggregates the
stationary distributions.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Iterator, Sequence

import numpy as np

from .encoding import top_k_similar
from .graph import HeteroGraph
from .llm import LLMGateway
from .traversal import (
    WalkParams,
    build_structural_transition,
    extract_subgraph,
    ppr,
    query_aware_transition,
)


@dataclass
class PoolEntry:
    """Provenance of one pooled proposition."""

    prop: int
    seed_round: bool = False
    iteration: int = 0
    query_index: int = 0


class PropositionPool:
    """Ordered, duplicate-free set of proposition ids with provenance."""

    def __init__(self, entries: Iterable[PoolEntry] = ()):
        self._entries: dict[int, PoolEntry] = {}
        for entry in entries:
            self.add(entry)

    def add(self, entry: PoolEntry) -> bool:
        """Insert unless present; the first provenance wins. Returns True if added."""
        if entry.prop in self._entries:
            return False
        self._entries[entry.prop] = entry
        return True

    def add_id(self, prop: int, **provenance) -> bool:
        return self.add(PoolEntry(prop, **provenance))

    def ids(self) -> list[int]:
        return list(self._entries.keys())

    def entry(self, prop: int) -> PoolEntry:
        return self._entries[prop]

    def copy(self) -> "PropositionPool":
        clone = PropositionPool()
        clone._entries = dict(self._entries)
        return clone

    def __contains__(self, prop: int) -> bool:
        return prop in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def __iter__(self) -> Iterator[int]:
        return iter(self._entries.keys())


@dataclass
class SuggestConfig:
    k: int = 20
    subgraph_size: int = 500
    walk: WalkParams = field(default_factory=WalkParams)

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.subgraph_size < 1:
            raise ValueError("subgraph_size must be >= 1")


def suggest_naive(query_vec: np.ndarray, graph: HeteroGraph, cfg: SuggestConfig) -> list[int]:
    """Top-k propositions by cosine, ignoring edges and any seed context."""
    matrix = graph.proposition_embeddings
    if matrix.shape[0] == 0:
        raise ValueError("graph has no propositions")
    return [idx for idx, _ in top_k_similar(query_vec, matrix, cfg.k)]


def _rank_new(
    probabilities: np.ndarray,
    row_props: Sequence[int],
    excluded: set[int],
    k: int,
) -> list[int]:
    """Positively-visited rows mapped to proposition ids, minus exclusions."""
    order = np.lexsort((np.arange(len(row_props)), -probabilities))
    out: list[int] = []
    for row in order:
        p = float(probabilities[row])
        if p <= 0.0:
            break  # unvisited rows are not reachable suggestions
        prop = row_props[int(row)]
        if prop in excluded:
            continue
        out.append(prop)
        if len(out) == k:
            break
    return out


def suggest_local(
    query_vec: np.ndarray,
    graph: HeteroGraph,
    seeds: PropositionPool | Sequence[int],
    cfg: SuggestConfig,
) -> list[int]:
    """Walk a seed-anchored subgraph, biased toward the query.

    Extracts a bounded subgraph around the seeds, builds the blended
    transition operator there, runs PPR restarting at the seeds, and
    returns the top-k visited propositions outside the seed set.
    """
    seed_ids = sorted(set(seeds.ids() if isinstance(seeds, PropositionPool) else seeds))
    if not seed_ids:
        raise ValueError("seed set must be non-empty")
    sub = extract_subgraph(graph, seed_ids, cfg.subgraph_size, cfg.walk)
    row_props = sub.proposition_indices
    row_of = {p: r for r, p in enumerate(row_props)}
    blended = query_aware_transition(sub, query_vec, cfg.walk)
    dist = ppr(blended, [row_of[p] for p in seed_ids], cfg.walk)
    return _rank_new(dist.probabilities, row_props, set(seed_ids), cfg.k)


def suggest_global(
    queries: Sequence[tuple[int, np.ndarray]],
    graph: HeteroGraph,
    cfg: SuggestConfig,
    exclude: Iterable[int] = (),
) -> tuple[list[int], list[dict[int, float]]]:
    """One walk per pool member over a shared subgraph, aggregated.

    ``queries`` pairs each partition member with its per-member query
    vector. Each member restarts its own walk at itself under its own
    blended operator; the summed stationary distributions rank candidates.
    Returns the top-k fresh ids plus each walker's visit probabilities
    keyed by proposition id (needed for downstream query refinement).
    """
    if not queries:
        raise ValueError("partition must be non-empty")
    members = [prop for prop, _ in queries]
    sub = extract_subgraph(graph, sorted(set(members)), cfg.subgraph_size, cfg.walk)
    row_props = sub.proposition_indices
    row_of = {p: r for r, p in enumerate(row_props)}
    structural = build_structural_transition(sub)

    aggregate = np.zeros(len(row_props), dtype=np.float64)
    walker_pis: list[dict[int, float]] = []
    for prop, q_vec in queries:
        blended = query_aware_transition(sub, q_vec, cfg.walk, structural=structural)
        dist = ppr(blended, [row_of[prop]], cfg.walk)
        aggregate += dist.probabilities
        walker_pis.append(
            {row_props[r]: float(p) for r, p in enumerate(dist.probabilities) if p > 0.0}
        )
    excluded = set(members) | set(exclude)
    return _rank_new(aggregate, row_props, excluded, cfg.k), walker_pis


def select(
    query_text: str,
    candidates: Sequence[int],
    graph: HeteroGraph,
    gateway: LLMGateway,
) -> list[int]:
    """LLM relevance pruning of candidate ids; order preserved, fail-open."""
    candidates = list(candidates)
    if not candidates:
        return []
    verdict = gateway.select_relevant(query_text, graph.proposition_texts(candidates))
    return [candidates[i] for i in verdict.kept]
