"""Walk machinery over the proposition graph.

Builds the proposition-to-proposition transition operators (a structural
one from graph connectivity, a query-aware one from embedding similarity,
and their convex blend), runs personalized PageRank over them, and carves
bounded subgraphs around seed sets with a degree-corrected random walk
with restart.

Conventions used throughout:

* transition matrices are row-stochastic where a row has any outgoing
  mass; rows without candidates are left all-zero ("dangling") and their
  mass is redirected to the restart vector during iteration;
* diagonals are always zero — a node never transitions to itself;
* all rankings break ties by ascending index so results are reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
import scipy.sparse as sp

from .graph import HeteroGraph, NodeId, NodeKind, proposition_id

_DANGLING_EPS = 1e-15


@dataclass
class WalkParams:
    """Knobs of the blended walk.

    ``lambda_`` balances structure against query similarity (1.0 means the
    walk ignores the query entirely), ``damping`` is the continue-walk
    probability, ``tau`` the similarity temperature, ``theta`` the cosine
    floor below which a neighbor attracts no semantic mass.
    """

    lambda_: float = 0.5
    damping: float = 0.85
    tau: float = 0.1
    theta: float = 0.4
    ppr_epsilon: float = 1e-8
    ppr_max_iters: int = 200

    def __post_init__(self) -> None:
        if not 0.0 <= self.lambda_ <= 1.0:
            raise ValueError(f"lambda must be in [0, 1], got {self.lambda_}")
        if not 0.0 < self.damping < 1.0:
            raise ValueError(f"damping must be in (0, 1), got {self.damping}")
        if self.tau <= 0.0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not -1.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must be in [-1, 1], got {self.theta}")
        if self.ppr_epsilon <= 0.0:
            raise ValueError("ppr_epsilon must be positive")
        if self.ppr_max_iters < 1:
            raise ValueError("ppr_max_iters must be >= 1")


@dataclass
class TransitionMatrix:
    """Sparse row-stochastic operator over ``size`` propositions.

    ``fallback_rows`` marks rows whose query-aware weights all fell below
    the cosine floor and therefore carry the structural row unchanged.
    """

    matrix: sp.csr_matrix
    fallback_rows: frozenset[int] = frozenset()

    @property
    def size(self) -> int:
        return self.matrix.shape[0]

    def row_sums(self) -> np.ndarray:
        return np.asarray(self.matrix.sum(axis=1)).ravel()

    def dangling_mask(self) -> np.ndarray:
        return self.row_sums() <= _DANGLING_EPS


@dataclass
class StationaryDistribution:
    """PPR output: one probability per proposition row."""

    probabilities: np.ndarray

    def ranked(self) -> list[int]:
        """Row indices by descending probability, ties by ascending index."""
        p = self.probabilities
        return [int(i) for i in np.lexsort((np.arange(p.shape[0]), -p))]

    def __getitem__(self, row: int) -> float:
        return float(self.probabilities[row])


class Subgraph:
    """Induced subgraph over a node subset of a parent graph.

    Exposes the same neighbor interface the transition builders need, with
    adjacency restricted to the retained nodes.
    """

    def __init__(self, parent: HeteroGraph, node_ids: Iterable[NodeId]):
        self.parent = parent
        self.node_ids: frozenset[NodeId] = frozenset(node_ids)
        self._adj: dict[NodeId, list[NodeId]] = {}
        edges = set()
        for node in self.node_ids:
            kept = [n for n in parent.neighbors(node) if n in self.node_ids]
            self._adj[node] = kept
            for other in kept:
                edges.add((node, other) if node < other else (other, node))
        self._edges = edges
        self.proposition_indices: list[int] = sorted(
            n.index for n in self.node_ids if n.kind is NodeKind.PROPOSITION
        )

    def neighbors(self, node: NodeId) -> list[NodeId]:
        return self._adj[node]

    def degree(self, node: NodeId) -> int:
        return len(self._adj[node])

    def edges(self) -> list[tuple[NodeId, NodeId]]:
        return sorted(self._edges)

    @property
    def node_count(self) -> int:
        return len(self.node_ids)

    def proposition_embeddings(self) -> np.ndarray:
        return self.parent.proposition_embeddings[self.proposition_indices]


def build_structural_transition(view: HeteroGraph | Subgraph) -> TransitionMatrix:
    """Two-step proposition-to-proposition transition through shared hubs.

    A walk step goes proposition -> incident entity/passage -> proposition,
    both hops uniform over the view-restricted neighbors. The diagonal is
    then zeroed and surviving rows renormalized so the operator stays
    stochastic.
    """
    props = view.proposition_indices
    n = len(props)
    if n == 0:
        raise ValueError("view contains no propositions")
    prop_row = {p: r for r, p in enumerate(props)}

    hubs: list[NodeId] = []
    hub_col: dict[NodeId, int] = {}
    rows_a: list[int] = []
    cols_a: list[int] = []
    data_a: list[float] = []
    for p in props:
        node = proposition_id(p)
        nbrs = view.neighbors(node)
        if not nbrs:
            continue
        w = 1.0 / len(nbrs)
        for other in nbrs:
            col = hub_col.get(other)
            if col is None:
                col = len(hubs)
                hub_col[other] = col
                hubs.append(other)
            rows_a.append(prop_row[p])
            cols_a.append(col)
            data_a.append(w)
    m_hubs = len(hubs)
    rows_b: list[int] = []
    cols_b: list[int] = []
    data_b: list[float] = []
    for hub, col in hub_col.items():
        nbrs = [x for x in view.neighbors(hub) if x.kind is NodeKind.PROPOSITION and x.index in prop_row]
        if not nbrs:
            continue
        w = 1.0 / view.degree(hub)
        for other in nbrs:
            rows_b.append(col)
            cols_b.append(prop_row[other.index])
            data_b.append(w)

    a = sp.csr_matrix((data_a, (rows_a, cols_a)), shape=(n, max(m_hubs, 1)))
    b = sp.csr_matrix((data_b, (rows_b, cols_b)), shape=(max(m_hubs, 1), n))
    t = (a @ b).tolil()
    t.setdiag(0.0)
    t = t.tocsr()
    t.eliminate_zeros()
    return TransitionMatrix(_renormalize_rows(t))


def _renormalize_rows(matrix: sp.csr_matrix) -> sp.csr_matrix:
    sums = np.asarray(matrix.sum(axis=1)).ravel()
    inv = np.divide(1.0, sums, out=np.zeros_like(sums), where=sums > _DANGLING_EPS)
    return sp.diags(inv).dot(matrix).tocsr()


def build_semantic_transition(
    structural: TransitionMatrix, similarities: np.ndarray, params: WalkParams
) -> TransitionMatrix:
    """Query-aware reweighting of the structural adjacency pattern.

    Each neighbor j attracts mass proportional to exp(c_j / tau), with
    neighbors below the cosine floor ``theta`` masked out entirely. Rows
    whose entire neighborhood falls below the floor keep their structural
    row so the walk never strands in a semantically dark region.
    """
    if params.tau <= 0:
        raise ValueError("tau must be positive")
    n = structural.size
    similarities = np.asarray(similarities, dtype=np.float64).ravel()
    if similarities.shape[0] != n:
        raise ValueError(f"similarity vector has {similarities.shape[0]} entries for {n} propositions")

    boosted = np.where(similarities >= params.theta, np.exp(similarities / params.tau), 0.0)
    base = structural.matrix
    indptr = base.indptr
    indices = base.indices
    out = sp.lil_matrix((n, n), dtype=np.float64)
    fallback: set[int] = set()
    for i in range(n):
        cols = indices[indptr[i] : indptr[i + 1]]
        if cols.size == 0:
            continue
        weights = boosted[cols]
        total = weights.sum()
        if total > 0.0:
            out.rows[i] = [int(c) for c in cols]
            out.data[i] = list(weights / total)
        else:
            row = base.getrow(i)
            out.rows[i] = [int(c) for c in row.indices]
            out.data[i] = [float(v) for v in row.data]
            fallback.add(i)
    csr = out.tocsr()
    csr.eliminate_zeros()
    return TransitionMatrix(csr, frozenset(fallback))


def blend(structural: TransitionMatrix, semantic: TransitionMatrix, lambda_: float) -> TransitionMatrix:
    """Convex combination lambda * structural + (1 - lambda) * semantic."""
    if not 0.0 <= lambda_ <= 1.0:
        raise ValueError(f"lambda must be in [0, 1], got {lambda_}")
    if structural.size != semantic.size:
        raise ValueError("matrices have different sizes")
    mixed = (lambda_ * structural.matrix + (1.0 - lambda_) * semantic.matrix).tocsr()
    mixed.eliminate_zeros()
    return TransitionMatrix(mixed, semantic.fallback_rows)


def ppr(
    transition: TransitionMatrix | sp.csr_matrix,
    seeds: Sequence[int],
    params: WalkParams,
) -> StationaryDistribution:
    """Personalized PageRank with restarts uniform over ``seeds``.

    Power iteration on ``pi <- d * (M^T pi + dangling_mass * r) + (1-d) * r``
    until the L1 change drops below ``ppr_epsilon`` or the iteration budget
    runs out. Mass sitting on dangling rows is redirected to the restart
    vector each step, so the output always sums to one.
    """
    matrix = transition.matrix if isinstance(transition, TransitionMatrix) else transition
    n = matrix.shape[0]
    seeds = list(seeds)
    if not seeds:
        raise ValueError("seed set must be non-empty")
    for s in seeds:
        if not 0 <= s < n:
            raise IndexError(f"seed {s} out of range for {n} rows")
    restart = np.zeros(n, dtype=np.float64)
    restart[sorted(set(seeds))] = 1.0 / len(set(seeds))

    row_sums = np.asarray(matrix.sum(axis=1)).ravel()
    dangling = row_sums <= _DANGLING_EPS
    mt = matrix.T.tocsr()
    d = params.damping

    pi = restart.copy()
    for _ in range(params.ppr_max_iters):
        dangling_mass = float(pi[dangling].sum()) if dangling.any() else 0.0
        nxt = d * (mt @ pi + dangling_mass * restart) + (1.0 - d) * restart
        err = float(np.abs(nxt - pi).sum())
        pi = nxt
        if err < params.ppr_epsilon:
            break
    return StationaryDistribution(pi)


def extract_subgraph(
    graph: HeteroGraph,
    seed_props: Sequence[int],
    size_limit: int,
    params: WalkParams,
) -> Subgraph:
    """Carve a bounded neighborhood around seed propositions.

    Runs a random walk with restart over the full graph (uniform neighbor
    transitions, restart to the seeds with probability 1 - damping), then
    ranks non-seed nodes by visit probability divided by degree. Dividing
    by degree keeps high-degree hubs from crowding out genuinely close
    nodes. Nodes are admitted in rank order until ``size_limit`` is
    reached; every admitted proposition drags its passage along, and seeds
    with their passages are always present no matter how small the limit.
    """
    seeds = sorted(set(seed_props))
    if not seeds:
        raise ValueError("seed set must be non-empty")
    if size_limit < len(seeds):
        raise ValueError(f"size limit {size_limit} below seed count {len(seeds)}")

    seed_nodes = [proposition_id(i) for i in seeds]
    seed_global = [graph.global_index(node) for node in seed_nodes]
    dist = ppr(graph.uniform_transition, seed_global, params)

    included: set[NodeId] = set(seed_nodes)
    for node in seed_nodes:
        included.add(graph.propositions[node.index].passage)

    degrees = graph.global_degrees
    order = graph.node_order
    scores = np.divide(
        dist.probabilities,
        degrees,
        out=np.zeros_like(dist.probabilities),
        where=degrees > 0,
    )
    ranking = np.lexsort((np.arange(len(order)), -scores))
    for gi in ranking:
        if len(included) >= size_limit:
            break
        node = order[int(gi)]
        if node in included:
            continue
        included.add(node)
        if node.kind is NodeKind.PROPOSITION:
            included.add(graph.propositions[node.index].passage)
    return Subgraph(graph, included)


def query_aware_transition(
    view: HeteroGraph | Subgraph,
    query_vec: np.ndarray,
    params: WalkParams,
    structural: TransitionMatrix | None = None,
) -> TransitionMatrix:
    """Build the blended walk operator for one query over ``view``.

    ``structural`` can be passed in when several queries share one view so
    the two-hop product is computed only once.
    """
    if structural is None:
        structural = build_structural_transition(view)
    if isinstance(view, Subgraph):
        embeddings = view.proposition_embeddings()
    else:
        embeddings = view.proposition_embeddings
    sims = embeddings.astype(np.float64) @ np.asarray(query_vec, dtype=np.float64)
    semantic = build_semantic_transition(structural, sims, params)
    return blend(structural, semantic, params.lambda_)
