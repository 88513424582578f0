"""Run configuration: one flat JSON file with explicit, validated keys.

Key names mirror the walk/retrieval parameter vocabulary used throughout
the package (lambda, damping, cosine_threshold, subgraph_max_size,
temperature, top_k, breadth_m, node_budget, ...). Unknown keys are
rejected so typos fail loudly instead of silently running defaults.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields
from pathlib import Path

from .encoding import DEFAULT_MOCK_DIM, EmbedBackend, HashedNgramEmbedder, OpenAICompatEmbedder
from .errors import ConfigError
from .global_mode import GlobalRunConfig
from .indexing import ChunkingPolicy, ReconciliationPolicy
from .llm import ChatBackend, MockChatBackend, OpenAICompatChatBackend
from .local_mode import LocalRunConfig
from .suggest import SuggestConfig
from .traversal import WalkParams

# file key -> attribute (only where they differ)
_KEY_ALIASES = {"lambda": "lambda_"}


@dataclass
class RunConfig:
    # walk
    lambda_: float = 0.5
    damping: float = 0.85
    cosine_threshold: float = 0.4
    temperature: float = 0.1
    ppr_epsilon: float = 1e-8
    ppr_max_iters: int = 200
    # retrieval
    top_k: int = 20
    subgraph_max_size: int = 500
    max_iter: int = 3
    max_subquestions: int = 3
    # global mode
    breadth_m: int = 10
    min_facts: int = 200
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
    # indexing
    chunk_target_tokens: int = 300
    chunk_overlap_tokens: int = 0
    synonym_threshold: float = 0.9
    # harness
    eval_workers: int = 1
    chat_backend: dict = field(default_factory=lambda: {"kind": "mock"})
    embed_backend: dict = field(default_factory=lambda: {"kind": "mock", "dimension": DEFAULT_MOCK_DIM})

    def walk_params(self) -> WalkParams:
        return WalkParams(
            lambda_=self.lambda_,
            damping=self.damping,
            tau=self.temperature,
            theta=self.cosine_threshold,
            ppr_epsilon=self.ppr_epsilon,
            ppr_max_iters=self.ppr_max_iters,
        )

    def suggest_config(self) -> SuggestConfig:
        return SuggestConfig(k=self.top_k, subgraph_size=self.subgraph_max_size, walk=self.walk_params())

    def local_config(self) -> LocalRunConfig:
        return LocalRunConfig(max_iter=self.max_iter, suggest=self.suggest_config())

    def global_config(self) -> GlobalRunConfig:
        return GlobalRunConfig(
            breadth_m=self.breadth_m,
            min_facts=self.min_facts,
            max_iter=self.max_iter,
            node_budget=self.node_budget,
            min_community_size=self.min_community_size,
            max_community_size=self.max_community_size,
            rocchio_alpha=self.rocchio_alpha,
            rocchio_beta=self.rocchio_beta,
            rocchio_gamma=self.rocchio_gamma,
            max_tokens_report=self.max_tokens_report,
            passage_token_limit=self.passage_token_limit,
            max_tokens_community_chunks=self.max_tokens_community_chunks,
            leiden_seed=self.leiden_seed,
            leiden_resolution=self.leiden_resolution,
            suggest=self.suggest_config(),
        )

    def chunking_policy(self) -> ChunkingPolicy:
        return ChunkingPolicy(self.chunk_target_tokens, self.chunk_overlap_tokens)

    def reconciliation_policy(self) -> ReconciliationPolicy:
        return ReconciliationPolicy(self.synonym_threshold)


def load_config(path: str | Path) -> RunConfig:
    try:
        raw = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    kwargs = {}
    for key, value in raw.items():
        attr = _KEY_ALIASES.get(key, key)
        if attr not in known:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[attr] = value
    cfg = RunConfig(**kwargs)
    try:  # surface range errors at load time, not first use
        cfg.walk_params()
        cfg.suggest_config()
        cfg.global_config()
        cfg.chunking_policy()
        cfg.reconciliation_policy()
        if cfg.eval_workers < 1:
            raise ValueError("eval_workers must be >= 1")
    except ValueError as err:
        raise ConfigError(str(err)) from err
    return cfg


def build_chat_backend(cfg: RunConfig, base_dir: Path | None = None) -> ChatBackend:
    spec = cfg.chat_backend
    kind = spec.get("kind", "mock")
    if kind == "mock":
        script = spec.get("script")
        if script:
            script_path = Path(script)
            if base_dir is not None and not script_path.is_absolute():
                script_path = base_dir / script_path
            return MockChatBackend.from_file(script_path)
        return MockChatBackend()
    if kind == "openai":
        return OpenAICompatChatBackend(
            base_url=spec["base_url"],
            model=spec["model"],
            api_key_env=spec.get("api_key_env", "OPENAI_API_KEY"),
            temperature=spec.get("temperature", 0.0),
            timeout=spec.get("timeout", 120.0),
            max_concurrency=spec.get("max_concurrency", 4),
        )
    raise ConfigError(f"unknown chat backend kind {kind!r}")


def build_embed_backend(cfg: RunConfig) -> EmbedBackend:
    spec = cfg.embed_backend
    kind = spec.get("kind", "mock")
    if kind == "mock":
        return HashedNgramEmbedder(dim=spec.get("dimension", DEFAULT_MOCK_DIM))
    if kind == "openai":
        return OpenAICompatEmbedder(
            base_url=spec["base_url"],
            model=spec["model"],
            api_key_env=spec.get("api_key_env", "OPENAI_API_KEY"),
            dim=spec.get("dimension"),
            batch_size=spec.get("batch_size", 64),
            timeout=spec.get("timeout", 60.0),
        )
    raise ConfigError(f"unknown embed backend kind {kind!r}")
