"""propgraph: retrieval over a heterogeneous proposition graph.

A corpus is indexed into a graph of passages, propositions and entities;
questions are answered by query-aware graph traversal with iterative
suggestion-selection cycles, in three modes: naive (similarity only),
local (multi-hop walks) and global (community-grounded synthesis).
"""

from .encoding import HashedNgramEmbedder, OpenAICompatEmbedder, cosine, top_k_similar
from .graph import HeteroGraph, NodeId, NodeKind, load, save
from .indexing import CorpusDocument, graph_stats, index_corpus
from .llm import LLMGateway, MockChatBackend, OpenAICompatChatBackend
from .local_mode import LocalRunConfig, answer_local, answer_naive
from .global_mode import GlobalRunConfig, answer_global
from .suggest import PropositionPool, SuggestConfig, suggest_global, suggest_local, suggest_naive
from .traversal import WalkParams

__version__ = "0.1.0"

__all__ = [
    "CorpusDocument",
    "GlobalRunConfig",
    "HashedNgramEmbedder",
    "HeteroGraph",
    "LLMGateway",
    "LocalRunConfig",
    "MockChatBackend",
    "NodeId",
    "NodeKind",
    "OpenAICompatChatBackend",
    "OpenAICompatEmbedder",
    "PropositionPool",
    "SuggestConfig",
    "WalkParams",
    "answer_global",
    "answer_local",
    "answer_naive",
    "cosine",
    "graph_stats",
    "index_corpus",
    "load",
    "save",
    "suggest_global",
    "suggest_local",
    "suggest_naive",
    "top_k_similar",
]
