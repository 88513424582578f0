"""Embedding backends, cosine similarity and exact top-k search.

All stored vectors are unit-normalized float32 so cosine similarity reduces
to a dot product. Exact search is used throughout: the corpora this engine
targets stay well below the scale where approximate indexes pay off.
"""

from __future__ import annotations

import hashlib
import logging
import os
import time
from typing import Iterable, Sequence

import numpy as np
import requests

from .errors import BackendUnavailable, DimensionMismatchError

log = logging.getLogger(__name__)


class _RetryableHTTP(Exception):
    """Transient server-side condition worth another attempt."""

NORM_TOL = 1e-6

DEFAULT_MOCK_DIM = 256


def normalize(values: Sequence[float] | np.ndarray) -> np.ndarray:
    """Return ``values`` as a unit-length float32 vector.

    A zero vector cannot be normalized; it maps to the first basis vector so
    downstream code never sees NaNs.
    """
    vec = np.asarray(values, dtype=np.float64)
    if vec.ndim != 1:
        raise ValueError(f"expected a 1-d vector, got shape {vec.shape}")
    norm = float(np.linalg.norm(vec))
    if norm == 0.0:
        out = np.zeros(vec.shape[0], dtype=np.float32)
        out[0] = 1.0
        return out
    return (vec / norm).astype(np.float32)


def is_normalized(vec: np.ndarray, tol: float = NORM_TOL) -> bool:
    return abs(float(np.linalg.norm(np.asarray(vec, dtype=np.float64))) - 1.0) <= tol


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    """Cosine similarity of two unit vectors (their dot product)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return float(np.dot(a, b))


def top_k_similar(query: np.ndarray, candidates: np.ndarray, k: int) -> list[tuple[int, float]]:
    """Exact top-k rows of ``candidates`` by cosine against ``query``.

    Ties are broken by ascending row index so rankings are reproducible.
    Returns fewer than ``k`` pairs when there are fewer candidates.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    candidates = np.asarray(candidates)
    if candidates.ndim != 2 or candidates.shape[0] == 0:
        raise ValueError("candidate matrix must be non-empty and 2-d")
    query = np.asarray(query, dtype=np.float64)
    if candidates.shape[1] != query.shape[0]:
        raise DimensionMismatchError(
            f"dimension mismatch: query {query.shape[0]} vs candidates {candidates.shape[1]}"
        )
    scores = candidates.astype(np.float64) @ query
    n = scores.shape[0]
    order = np.lexsort((np.arange(n), -scores))
    return [(int(i), float(scores[i])) for i in order[:k]]


class EmbedBackend:
    """Interface every embedding backend implements."""

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        raise NotImplementedError

    def dimension(self) -> int:
        raise NotImplementedError

    def embed_one(self, text: str) -> np.ndarray:
        return self.embed([text])[0]


class HashedNgramEmbedder(EmbedBackend):
    """Deterministic offline encoder hashing character 3-grams.

    Each 3-gram of the lowercased text is hashed (blake2b, so results are
    stable across processes) to a bucket and a sign; lexically overlapping
    texts therefore land close in cosine while unrelated texts stay near
    orthogonal. Byte-identical inputs produce byte-identical vectors.
    """

    def __init__(self, dim: int = DEFAULT_MOCK_DIM, ngram: int = 3):
        if dim < 2:
            raise ValueError("dim must be >= 2")
        self._dim = dim
        self._n = ngram

    def dimension(self) -> int:
        return self._dim

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        return [self._encode(t) for t in texts]

    def _encode(self, text: str) -> np.ndarray:
        lowered = text.lower()
        if len(lowered) < self._n:
            grams: Iterable[str] = [lowered]
        else:
            grams = (lowered[i : i + self._n] for i in range(len(lowered) - self._n + 1))
        vec = np.zeros(self._dim, dtype=np.float64)
        for gram in grams:
            digest = hashlib.blake2b(gram.encode("utf-8"), digest_size=9).digest()
            bucket = int.from_bytes(digest[:8], "little") % self._dim
            sign = 1.0 if digest[8] % 2 == 0 else -1.0
            vec[bucket] += sign
        return normalize(vec)


class OpenAICompatEmbedder(EmbedBackend):
    """Client for an OpenAI-compatible ``/embeddings`` endpoint.

    Sends batched inputs and returns one vector per input, in order.
    Responses are re-normalized locally since not every served model
    guarantees unit vectors.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        api_key_env: str = "OPENAI_API_KEY",
        dim: int | None = None,
        batch_size: int = 64,
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff: float = 1.0,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self._api_key = api_key or os.environ.get(api_key_env, "")
        self._dim = dim
        self.batch_size = batch_size
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff = backoff
        self._session = requests.Session()

    def dimension(self) -> int:
        if self._dim is None:
            self._dim = self.embed(["dimension probe"])[0].shape[0]
        return self._dim

    def embed(self, texts: Sequence[str]) -> list[np.ndarray]:
        out: list[np.ndarray] = []
        for start in range(0, len(texts), self.batch_size):
            batch = list(texts[start : start + self.batch_size])
            out.extend(self._embed_batch(batch))
        return out

    def _embed_batch(self, batch: list[str]) -> list[np.ndarray]:
        if not batch:
            return []
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        payload = {"model": self.model, "input": batch}
        last_err: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = self._session.post(
                    f"{self.base_url}/embeddings", json=payload, headers=headers, timeout=self.timeout
                )
                if resp.status_code == 429 or resp.status_code >= 500:
                    raise _RetryableHTTP(f"status {resp.status_code}")
                if resp.status_code >= 400:  # permanent: bad request/auth, do not retry
                    raise BackendUnavailable(f"embeddings endpoint returned {resp.status_code}")
                data = resp.json()["data"]
                vectors = [normalize(item["embedding"]) for item in sorted(data, key=lambda d: d["index"])]
                if len(vectors) != len(batch):
                    raise BackendUnavailable(
                        f"embeddings endpoint returned {len(vectors)} vectors for {len(batch)} inputs"
                    )
                return vectors
            except (_RetryableHTTP, requests.RequestException, KeyError, ValueError) as err:
                last_err = err
                if attempt + 1 < self.max_retries:
                    time.sleep(self.backoff * 2.0**attempt)
        raise BackendUnavailable(f"embeddings request failed after {self.max_retries} attempts: {last_err}")
