"""Heterogeneous graph of passages, propositions and entities.

The graph holds three disjoint node kinds with dense per-kind integer ids,
and undirected edges of exactly two families: proposition-to-entity and
proposition-to-passage. It is mutable while an index is being built and
becomes immutable (and safely shareable across threads) after
:meth:`HeteroGraph.finalize`.
"""

from __future__ import annotations

import enum
import functools
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .encoding import NORM_TOL, is_normalized
from .errors import (
    CorruptFileError,
    DimensionMismatchError,
    EmptyTextError,
    FrozenGraphError,
    GraphNotFinalizedError,
    NotNormalizedError,
    UnknownNodeError,
    VersionMismatchError,
)

GRAPH_FORMAT = "propgraph-graph"
GRAPH_FORMAT_VERSION = 1

_EMBEDDING_HEADER = struct.Struct("<QQ")


class NodeKind(enum.Enum):
    PASSAGE = "passage"
    PROPOSITION = "proposition"
    ENTITY = "entity"


_KIND_RANK = {NodeKind.PASSAGE: 0, NodeKind.PROPOSITION: 1, NodeKind.ENTITY: 2}


@functools.total_ordering
@dataclass(frozen=True)
class NodeId:
    kind: NodeKind
    index: int

    def __lt__(self, other: "NodeId") -> bool:
        return (_KIND_RANK[self.kind], self.index) < (_KIND_RANK[other.kind], other.index)

    def tag(self) -> str:
        return f"{self.kind.value}:{self.index}"

    @staticmethod
    def from_tag(tag: str) -> "NodeId":
        kind_name, _, idx = tag.partition(":")
        return NodeId(NodeKind(kind_name), int(idx))


def passage_id(index: int) -> NodeId:
    return NodeId(NodeKind.PASSAGE, index)


def proposition_id(index: int) -> NodeId:
    return NodeId(NodeKind.PROPOSITION, index)


def entity_id(index: int) -> NodeId:
    return NodeId(NodeKind.ENTITY, index)


@dataclass
class PassageRecord:
    id: NodeId
    text: str
    source_doc: str
    char_span: tuple[int, int]


@dataclass
class PropositionRecord:
    id: NodeId
    text: str
    passage: NodeId
    entity_refs: list[NodeId]
    embedding: np.ndarray


@dataclass
class EntityRecord:
    id: NodeId
    canonical_name: str
    aliases: list[str] = field(default_factory=list)
    embedding: np.ndarray | None = None


def _legal_edge(a: NodeId, b: NodeId) -> bool:
    kinds = {a.kind, b.kind}
    return kinds in ({NodeKind.PROPOSITION, NodeKind.ENTITY}, {NodeKind.PROPOSITION, NodeKind.PASSAGE})


class HeteroGraph:
    """Mutable-then-frozen container for the three-kind node universe."""

    def __init__(self) -> None:
        self.passages: list[PassageRecord] = []
        self.propositions: list[PropositionRecord] = []
        self.entities: list[EntityRecord] = []
        self._adj: dict[NodeId, set[NodeId]] = {}
        self._edges: set[tuple[NodeId, NodeId]] = set()
        self._finalized = False
        self._embedding_dim: int | None = None
        # caches built at finalize
        self._prop_embeddings: np.ndarray | None = None
        self._entity_embeddings: np.ndarray | None = None
        self._node_order: list[NodeId] | None = None
        self._global_index: dict[NodeId, int] | None = None
        self._uniform_csr: sp.csr_matrix | None = None
        self._degrees: np.ndarray | None = None

    # ------------------------------------------------------------------
    # construction
    # ------------------------------------------------------------------

    def _check_mutable(self) -> None:
        if self._finalized:
            raise FrozenGraphError("graph is finalized; create a new graph to re-index")

    def _check_embedding(self, embedding: np.ndarray) -> np.ndarray:
        embedding = np.asarray(embedding, dtype=np.float32)
        if embedding.ndim != 1:
            raise NotNormalizedError("embedding must be a 1-d vector")
        if self._embedding_dim is None:
            self._embedding_dim = int(embedding.shape[0])
        elif embedding.shape[0] != self._embedding_dim:
            raise DimensionMismatchError(
                f"embedding dimension {embedding.shape[0]} != graph dimension {self._embedding_dim}"
            )
        if not is_normalized(embedding, NORM_TOL):
            raise NotNormalizedError("embedding is not unit length within 1e-6")
        return embedding

    def add_passage(self, text: str, source_doc: str, span: tuple[int, int]) -> NodeId:
        self._check_mutable()
        if not text:
            raise EmptyTextError("passage text must be non-empty")
        a, b = int(span[0]), int(span[1])
        if a < 0 or b < a:
            raise ValueError(f"invalid char span ({a}, {b})")
        node = passage_id(len(self.passages))
        self.passages.append(PassageRecord(node, text, source_doc, (a, b)))
        self._adj[node] = set()
        return node

    def add_entity(self, canonical_name: str, embedding: np.ndarray, aliases: tuple[str, ...] = ()) -> NodeId:
        self._check_mutable()
        if not canonical_name:
            raise EmptyTextError("entity name must be non-empty")
        embedding = self._check_embedding(embedding)
        node = entity_id(len(self.entities))
        self.entities.append(EntityRecord(node, canonical_name, list(aliases), embedding))
        self._adj[node] = set()
        return node

    def add_entity_alias(self, entity: NodeId, surface: str) -> None:
        self._check_mutable()
        record = self._entity_record(entity)
        if surface != record.canonical_name and surface not in record.aliases:
            record.aliases.append(surface)

    def add_proposition(
        self,
        text: str,
        passage: NodeId,
        entities: list[NodeId],
        embedding: np.ndarray,
    ) -> NodeId:
        self._check_mutable()
        if not text:
            raise EmptyTextError("proposition text must be non-empty")
        if passage.kind is not NodeKind.PASSAGE or not self.has_node(passage):
            raise UnknownNodeError(f"unknown passage {passage}")
        deduped: list[NodeId] = []
        for ent in entities:
            if ent.kind is not NodeKind.ENTITY or not self.has_node(ent):
                raise UnknownNodeError(f"unknown entity {ent}")
            if ent not in deduped:
                deduped.append(ent)
        embedding = self._check_embedding(embedding)
        node = proposition_id(len(self.propositions))
        self.propositions.append(PropositionRecord(node, text, passage, deduped, embedding))
        self._adj[node] = set()
        self._add_edge(node, passage)
        for ent in deduped:
            self._add_edge(node, ent)
        return node

    def _add_edge(self, a: NodeId, b: NodeId) -> None:
        if not _legal_edge(a, b):
            raise ValueError(f"illegal edge between {a} and {b}")
        key = (a, b) if a < b else (b, a)
        if key in self._edges:
            return
        self._edges.add(key)
        self._adj[a].add(b)
        self._adj[b].add(a)

    # ------------------------------------------------------------------
    # queries
    # ------------------------------------------------------------------

    def has_node(self, node: NodeId) -> bool:
        return node in self._adj

    def neighbors(self, node: NodeId) -> list[NodeId]:
        if node not in self._adj:
            raise UnknownNodeError(f"unknown node {node}")
        return sorted(self._adj[node])

    def degree(self, node: NodeId) -> int:
        if node not in self._adj:
            raise UnknownNodeError(f"unknown node {node}")
        return len(self._adj[node])

    def edges(self) -> list[tuple[NodeId, NodeId]]:
        return sorted(self._edges)

    @property
    def edge_count(self) -> int:
        return len(self._edges)

    @property
    def node_count(self) -> int:
        return len(self.passages) + len(self.propositions) + len(self.entities)

    @property
    def embedding_dim(self) -> int:
        return self._embedding_dim or 0

    @property
    def proposition_indices(self) -> list[int]:
        return list(range(len(self.propositions)))

    def _entity_record(self, node: NodeId) -> EntityRecord:
        if node.kind is not NodeKind.ENTITY or node.index >= len(self.entities):
            raise UnknownNodeError(f"unknown entity {node}")
        return self.entities[node.index]

    def proposition_text(self, index: int) -> str:
        return self.propositions[index].text

    def proposition_texts(self, indices) -> list[str]:
        return [self.propositions[i].text for i in indices]

    # ------------------------------------------------------------------
    # finalization
    # ------------------------------------------------------------------

    @property
    def finalized(self) -> bool:
        return self._finalized

    def finalize(self) -> "HeteroGraph":
        """Drop orphan entities, validate all invariants and freeze the graph."""
        if self._finalized:
            return self
        self._remove_orphan_entities()
        self.validate()
        self._build_caches()
        self._finalized = True
        return self

    def _remove_orphan_entities(self) -> None:
        keep = [rec for rec in self.entities if self._adj[rec.id]]
        if len(keep) == len(self.entities):
            return
        remap: dict[NodeId, NodeId] = {}
        for new_index, rec in enumerate(keep):
            remap[rec.id] = entity_id(new_index)
        dropped = {rec.id for rec in self.entities if rec.id not in remap}
        for rec in keep:
            old = rec.id
            rec.id = remap[old]
        self.entities = keep
        for prop in self.propositions:
            prop.entity_refs = [remap[e] for e in prop.entity_refs]
        new_adj: dict[NodeId, set[NodeId]] = {}
        for node, nbrs in self._adj.items():
            if node in dropped:
                continue
            mapped = remap.get(node, node)
            new_adj[mapped] = {remap.get(n, n) for n in nbrs}
        self._adj = new_adj
        self._edges = {
            ((remap.get(a, a), remap.get(b, b)) if remap.get(a, a) < remap.get(b, b) else (remap.get(b, b), remap.get(a, a)))
            for a, b in self._edges
            if a not in dropped and b not in dropped
        }

    def validate(self) -> None:
        """Raise if any structural invariant is violated."""
        for a, b in self._edges:
            if not _legal_edge(a, b):
                raise ValueError(f"illegal edge kind pair: {a} - {b}")
            if a == b:
                raise ValueError(f"self loop on {a}")
        for prop in self.propositions:
            passage_nbrs = [n for n in self._adj[prop.id] if n.kind is NodeKind.PASSAGE]
            if len(passage_nbrs) != 1:
                raise ValueError(f"{prop.id} has {len(passage_nbrs)} passage edges, expected 1")
            if len(set(prop.entity_refs)) != len(prop.entity_refs):
                raise ValueError(f"{prop.id} has duplicate entity refs")
            if not is_normalized(prop.embedding):
                raise NotNormalizedError(f"{prop.id} embedding is not unit length")
        for ent in self.entities:
            if ent.embedding is not None and not is_normalized(ent.embedding):
                raise NotNormalizedError(f"{ent.id} embedding is not unit length")

    def _build_caches(self) -> None:
        dim = self._embedding_dim or 0
        if self.propositions:
            self._prop_embeddings = np.stack([p.embedding for p in self.propositions]).astype(np.float32)
        else:
            self._prop_embeddings = np.zeros((0, dim), dtype=np.float32)
        if self.entities:
            self._entity_embeddings = np.stack([e.embedding for e in self.entities]).astype(np.float32)
        else:
            self._entity_embeddings = np.zeros((0, dim), dtype=np.float32)
        order: list[NodeId] = [p.id for p in self.passages]
        order += [p.id for p in self.propositions]
        order += [e.id for e in self.entities]
        self._node_order = order
        self._global_index = {node: i for i, node in enumerate(order)}
        n = len(order)
        degrees = np.zeros(n, dtype=np.float64)
        rows: list[int] = []
        cols: list[int] = []
        for a, b in self._edges:
            ia, ib = self._global_index[a], self._global_index[b]
            rows += [ia, ib]
            cols += [ib, ia]
            degrees[ia] += 1
            degrees[ib] += 1
        data = np.ones(len(rows), dtype=np.float64)
        adj = sp.csr_matrix((data, (rows, cols)), shape=(n, n))
        inv_deg = np.divide(1.0, degrees, out=np.zeros_like(degrees), where=degrees > 0)
        self._uniform_csr = sp.diags(inv_deg).dot(adj).tocsr()
        self._degrees = degrees

    def _require_finalized(self) -> None:
        if not self._finalized:
            raise GraphNotFinalizedError("call finalize() first")

    @property
    def proposition_embeddings(self) -> np.ndarray:
        self._require_finalized()
        return self._prop_embeddings

    @property
    def entity_embeddings(self) -> np.ndarray:
        self._require_finalized()
        return self._entity_embeddings

    @property
    def node_order(self) -> list[NodeId]:
        self._require_finalized()
        return self._node_order

    def global_index(self, node: NodeId) -> int:
        self._require_finalized()
        try:
            return self._global_index[node]
        except KeyError:
            raise UnknownNodeError(f"unknown node {node}") from None

    @property
    def uniform_transition(self) -> sp.csr_matrix:
        """Row-stochastic uniform-over-neighbors walk matrix over all nodes."""
        self._require_finalized()
        return self._uniform_csr

    @property
    def global_degrees(self) -> np.ndarray:
        self._require_finalized()
        return self._degrees


# ----------------------------------------------------------------------
# persistence
# ----------------------------------------------------------------------


def _write_embeddings(path: Path, matrix: np.ndarray) -> None:
    matrix = np.ascontiguousarray(matrix, dtype="<f4")
    with open(path, "wb") as fh:
        fh.write(_EMBEDDING_HEADER.pack(matrix.shape[0], matrix.shape[1] if matrix.ndim == 2 else 0))
        fh.write(matrix.tobytes())


def _read_embeddings(path: Path) -> np.ndarray:
    raw = path.read_bytes()
    if len(raw) < _EMBEDDING_HEADER.size:
        raise CorruptFileError(f"{path.name}: missing embedding header")
    rows, dim = _EMBEDDING_HEADER.unpack_from(raw)
    expected = _EMBEDDING_HEADER.size + rows * dim * 4
    if len(raw) != expected:
        raise CorruptFileError(f"{path.name}: expected {expected} bytes, found {len(raw)}")
    data = np.frombuffer(raw, dtype="<f4", offset=_EMBEDDING_HEADER.size)
    return data.reshape(int(rows), int(dim)).copy()


def save(graph: HeteroGraph, path: str | Path) -> None:
    """Write ``graph`` to a directory; see :func:`load` for the inverse."""
    graph._require_finalized()
    root = Path(path)
    root.mkdir(parents=True, exist_ok=True)
    manifest = {
        "format": GRAPH_FORMAT,
        "format_version": GRAPH_FORMAT_VERSION,
        "counts": {
            "passages": len(graph.passages),
            "propositions": len(graph.propositions),
            "entities": len(graph.entities),
            "edges": graph.edge_count,
        },
        "embedding_dim": graph.embedding_dim,
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    with open(root / "passages.jsonl", "w") as fh:
        for rec in graph.passages:
            fh.write(
                json.dumps(
                    {
                        "id": rec.id.index,
                        "text": rec.text,
                        "source_doc": rec.source_doc,
                        "char_span": list(rec.char_span),
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(root / "propositions.jsonl", "w") as fh:
        for rec in graph.propositions:
            fh.write(
                json.dumps(
                    {
                        "id": rec.id.index,
                        "text": rec.text,
                        "passage": rec.passage.index,
                        "entities": [e.index for e in rec.entity_refs],
                    },
                    sort_keys=True,
                )
                + "\n"
            )
    with open(root / "entities.jsonl", "w") as fh:
        for rec in graph.entities:
            fh.write(
                json.dumps(
                    {"id": rec.id.index, "name": rec.canonical_name, "aliases": rec.aliases},
                    sort_keys=True,
                )
                + "\n"
            )
    with open(root / "edges.txt", "w") as fh:
        for a, b in graph.edges():
            fh.write(f"{a.tag()}\t{b.tag()}\n")
    _write_embeddings(root / "proposition_embeddings.bin", graph.proposition_embeddings)
    _write_embeddings(root / "entity_embeddings.bin", graph.entity_embeddings)


def load(path: str | Path) -> HeteroGraph:
    """Load a graph directory written by :func:`save` and finalize it."""
    root = Path(path)
    manifest_path = root / "manifest.json"
    if not manifest_path.exists():
        raise CorruptFileError(f"{root}: no manifest.json")
    try:
        manifest = json.loads(manifest_path.read_text())
    except json.JSONDecodeError as err:
        raise CorruptFileError(f"{root}: unreadable manifest: {err}") from err
    if manifest.get("format") != GRAPH_FORMAT:
        raise CorruptFileError(f"{root}: not a graph directory")
    if manifest.get("format_version") != GRAPH_FORMAT_VERSION:
        raise VersionMismatchError(
            f"{root}: format version {manifest.get('format_version')} unsupported "
            f"(expected {GRAPH_FORMAT_VERSION})"
        )
    counts = manifest.get("counts", {})

    graph = HeteroGraph()
    try:
        prop_embs = _read_embeddings(root / "proposition_embeddings.bin")
        ent_embs = _read_embeddings(root / "entity_embeddings.bin")
        with open(root / "passages.jsonl") as fh:
            for line in fh:
                obj = json.loads(line)
                graph.passages.append(
                    PassageRecord(
                        passage_id(obj["id"]), obj["text"], obj["source_doc"], tuple(obj["char_span"])
                    )
                )
        with open(root / "propositions.jsonl") as fh:
            for line in fh:
                obj = json.loads(line)
                graph.propositions.append(
                    PropositionRecord(
                        proposition_id(obj["id"]),
                        obj["text"],
                        passage_id(obj["passage"]),
                        [entity_id(i) for i in obj["entities"]],
                        prop_embs[obj["id"]],
                    )
                )
        with open(root / "entities.jsonl") as fh:
            for line in fh:
                obj = json.loads(line)
                graph.entities.append(
                    EntityRecord(entity_id(obj["id"]), obj["name"], list(obj["aliases"]), ent_embs[obj["id"]])
                )
        for rec in graph.passages + graph.propositions + graph.entities:
            graph._adj[rec.id] = set()
        with open(root / "edges.txt") as fh:
            for line in fh:
                if not line.strip():
                    continue
                a_tag, b_tag = line.rstrip("\n").split("\t")
                a, b = NodeId.from_tag(a_tag), NodeId.from_tag(b_tag)
                if a not in graph._adj or b not in graph._adj:
                    raise CorruptFileError(f"{root}: edge references unknown node {a_tag} {b_tag}")
                graph._edges.add((a, b) if a < b else (b, a))
                graph._adj[a].add(b)
                graph._adj[b].add(a)
    except (KeyError, ValueError, IndexError, json.JSONDecodeError) as err:
        raise CorruptFileError(f"{root}: corrupt graph file: {err}") from err

    observed = {
        "passages": len(graph.passages),
        "propositions": len(graph.propositions),
        "entities": len(graph.entities),
        "edges": len(graph._edges),
    }
    if counts != observed:
        raise CorruptFileError(f"{root}: manifest counts {counts} != files {observed}")
    if prop_embs.shape[0] != len(graph.propositions) or ent_embs.shape[0] != len(graph.entities):
        raise CorruptFileError(f"{root}: embedding row count mismatch")
    graph._embedding_dim = int(manifest.get("embedding_dim", prop_embs.shape[1]))
    return graph.finalize()
