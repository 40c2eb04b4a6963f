"""Embedding providers and the long-document embedding strategies.

Two providers ship: a seeded feature-hashing embedder (deterministic, no
network, used by tests and the bundled fixture) and a remote client for
HTTP embedding APIs that accept ``{"model", "input": [...]}``.
"""
from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass
from functools import lru_cache
from typing import Callable, Protocol, Sequence

import numpy as np

from .._http import post_json
from ..corpus import DEFAULT_TOKENIZER, Document, TokenizerConfig, chunk_text, count_tokens, tokenize, truncate_to_budget
from ..errors import DataError, EmbeddingError

LONG_DOC_STRATEGIES = ("truncate", "weighted_average")


@dataclass(frozen=True)
class EmbeddingProviderConfig:
    kind: str = "hashing"
    # remote
    endpoint: str | None = None
    model: str | None = None
    api_key_env: str = "EMBEDDING_API_KEY"
    timeout: float = 60.0
    # hashing
    dimension: int = 256
    seed: int = 0
    max_input_tokens: int = 8191
    long_doc_strategy: str = "weighted_average"

    def __post_init__(self):
        if self.kind not in ("hashing", "remote"):
            raise DataError(f"unknown embedding provider kind {self.kind!r}")
        if self.max_input_tokens < 1:
            raise DataError("max_input_tokens must be >= 1")
        if self.long_doc_strategy not in LONG_DOC_STRATEGIES:
            raise DataError(f"long_doc_strategy must be one of {LONG_DOC_STRATEGIES}")
        if self.kind == "hashing" and self.dimension < 1:
            raise DataError("dimension must be >= 1")
        if self.kind == "remote" and not (self.endpoint and self.model):
            raise DataError("remote embedding provider needs endpoint and model")

    @property
    def tag(self) -> str:
        if self.kind == "hashing":
            base = f"hashing-d{self.dimension}-s{self.seed}"
        else:
            base = f"remote-{self.model}"
        return f"{base}/{self.long_doc_strategy}"

    @classmethod
    def from_dict(cls, d: dict | None) -> "EmbeddingProviderConfig":
        return cls(**(d or {}))

    def to_dict(self) -> dict:
        return asdict(self)


class Embedder(Protocol):
    config: EmbeddingProviderConfig
    tokenizer: TokenizerConfig

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray: ...


def _normalize(v: np.ndarray) -> np.ndarray:
    if not np.all(np.isfinite(v)):
        raise EmbeddingError("embedding contains non-finite values")
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise EmbeddingError("cannot normalize a zero embedding")
    return v / norm


class HashingEmbedder:
    """Signed feature hashing of token counts, L2-normalized."""

    def __init__(self, config: EmbeddingProviderConfig, tokenizer: TokenizerConfig = DEFAULT_TOKENIZER):
        self.config = config
        self.tokenizer = tokenizer
        self._key = str(config.seed).encode()
        self._slot = lru_cache(maxsize=1 << 16)(self._hash_slot)

    def _hash_slot(self, token: str) -> tuple[int, float]:
        h = int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8, key=self._key).digest(), "little")
        return h % self.config.dimension, (-1.0 if h >> 63 else 1.0)

    def slot(self, token: str) -> tuple[int, float]:
        """Index and sign a token hashes to."""
        return self._slot(token)

    def raw_vector(self, text: str) -> np.ndarray:
        v = np.zeros(self.config.dimension)
        for tok in tokenize(text, self.tokenizer):
            i, sign = self._slot(tok)
            v[i] += sign
        return v

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.config.dimension))
        for row, text in enumerate(texts):
            v = self.raw_vector(text)
            if not v.any():
                raise EmbeddingError(f"text has no embeddable tokens: {text[:40]!r}")
            out[row] = _normalize(v)
        return out


class RemoteEmbedder:
    """Client for an HTTP JSON embeddings endpoint (OpenAI-compatible response shape)."""

    def __init__(self, config: EmbeddingProviderConfig, tokenizer: TokenizerConfig = DEFAULT_TOKENIZER,
                 *, sleep: Callable[[float], None] | None = None, retries: int = 3):
        self.config = config
        self.tokenizer = tokenizer
        self.retries = retries
        self._sleep = sleep
        self.dimension: int | None = None

    def embed_batch(self, texts: Sequence[str]) -> np.ndarray:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.config.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        body = post_json(
            self.config.endpoint,
            {"model": self.config.model, "input": list(texts)},
            headers=headers,
            retries=self.retries,
            timeout=self.config.timeout,
            error_cls=EmbeddingError,
            sleep=self._sleep,
        )
        try:
            items = sorted(body["data"], key=lambda item: item.get("index", 0))
            vectors = np.array([item["embedding"] for item in items], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise EmbeddingError(f"unexpected embeddings response: {exc}") from exc
        if vectors.ndim != 2 or vectors.shape[0] != len(texts):
            raise EmbeddingError(f"expected {len(texts)} vectors, got shape {vectors.shape}")
        if self.dimension is None:
            self.dimension = vectors.shape[1]
        elif vectors.shape[1] != self.dimension:
            raise EmbeddingError(f"dimension mismatch: expected {self.dimension}, got {vectors.shape[1]}")
        return np.vstack([_normalize(v) for v in vectors])


def make_embedder(config: EmbeddingProviderConfig, tokenizer: TokenizerConfig = DEFAULT_TOKENIZER) -> Embedder:
    if config.kind == "hashing":
        return HashingEmbedder(config, tokenizer)
    return RemoteEmbedder(config, tokenizer)


def as_embedder(provider: Embedder | EmbeddingProviderConfig,
                tokenizer: TokenizerConfig = DEFAULT_TOKENIZER) -> Embedder:
    if isinstance(provider, EmbeddingProviderConfig):
        return make_embedder(provider, tokenizer)
    return provider


def embed_text(text: str, provider: Embedder | EmbeddingProviderConfig) -> np.ndarray:
    """Embed text that fits the provider's input limit."""
    emb = as_embedder(provider)
    n = count_tokens(text, emb.tokenizer)
    if n > emb.config.max_input_tokens:
        raise DataError(
            f"text has {n} tokens, over the provider limit of {emb.config.max_input_tokens}; "
            "use embed_long_document"
        )
    return emb.embed_batch([text])[0]


def embed_long_document(doc: Document | str, provider: Embedder | EmbeddingProviderConfig) -> np.ndarray:
    emb = as_embedder(provider)
    text = doc.text if isinstance(doc, Document) else doc
    limit = emb.config.max_input_tokens
    if count_tokens(text, emb.tokenizer) <= limit:
        return emb.embed_batch([text])[0]
    if emb.config.long_doc_strategy == "truncate":
        return emb.embed_batch([truncate_to_budget(text, limit, emb.tokenizer)])[0]
    chunks = chunk_text(text, limit, 0, emb.tokenizer)
    vectors = emb.embed_batch([c.text for c in chunks])
    weights = np.array([c.n_tokens for c in chunks], dtype=float)
    return _normalize(weights @ vectors)
