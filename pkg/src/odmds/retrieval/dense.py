"""Exhaustive cosine-similarity retrieval over document embeddings."""
from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .._io import atomic_write_text
from ..corpus import Corpus
from ..errors import DataError
from .embedding import Embedder, EmbeddingProviderConfig, as_embedder, embed_long_document, embed_text
from .runs import RankedDoc, rank_scores

NORM_TOL = 1e-6


@dataclass(frozen=True)
class DenseIndex:
    doc_ids: list[str]
    vectors: np.ndarray  # (n_docs, dimension), rows L2-normalized
    provider_tag: str

    @property
    def dimension(self) -> int:
        return int(self.vectors.shape[1])

    def vector(self, doc_id: str) -> np.ndarray:
        return self.vectors[self.doc_ids.index(doc_id)]

    def validate(self) -> None:
        if self.vectors.ndim != 2 or self.vectors.shape[0] != len(self.doc_ids):
            raise DataError("dense index: vector count does not match doc ids")
        if not np.all(np.isfinite(self.vectors)):
            raise DataError("dense index: non-finite vector entries")
        norms = np.linalg.norm(self.vectors, axis=1)
        if np.any(np.abs(norms - 1.0) > NORM_TOL):
            raise DataError("dense index: vectors are not L2-normalized")


def build_dense_index(corpus: Corpus, provider: Embedder | EmbeddingProviderConfig,
                      max_concurrency: int = 4) -> DenseIndex:
    """Embed every document. Any failure aborts the whole build."""
    if len(corpus) == 0:
        raise DataError("cannot index an empty corpus")
    emb = as_embedder(provider, corpus.tokenizer)
    docs = list(corpus)
    if max_concurrency > 1:
        with ThreadPoolExecutor(max_workers=max_concurrency) as pool:
            vectors = list(pool.map(lambda d: embed_long_document(d, emb), docs))
    else:
        vectors = [embed_long_document(d, emb) for d in docs]
    index = DenseIndex(corpus.doc_ids, np.vstack(vectors), emb.config.tag)
    index.validate()
    return index


def search_dense(index: DenseIndex, query: str, provider: Embedder | EmbeddingProviderConfig,
                 k: int) -> list[RankedDoc]:
    if k < 1:
        raise ValueError("k must be >= 1")
    q = embed_text(query, provider)
    if q.shape[0] != index.dimension:
        raise DataError(f"query embedding has dimension {q.shape[0]}, index has {index.dimension}")
    scores = np.clip(index.vectors @ q, -1.0, 1.0)
    return rank_scores(zip(index.doc_ids, scores.tolist()), k)


def save_dense_index(index: DenseIndex, path: str | os.PathLike) -> None:
    header = {"format": "odmds-dense-index/1", "dimension": index.dimension,
              "provider_tag": index.provider_tag, "count": len(index.doc_ids)}
    lines = [json.dumps(header)]
    for doc_id, vec in zip(index.doc_ids, index.vectors):
        lines.append(json.dumps({"doc_id": doc_id, "vector": vec.tolist()}, ensure_ascii=False))
    atomic_write_text(path, "\n".join(lines) + "\n")


def load_dense_index(path: str | os.PathLike) -> DenseIndex:
    try:
        with open(path, encoding="utf-8") as fh:
            header = json.loads(fh.readline())
            records = [json.loads(line) for line in fh if line.strip()]
    except FileNotFoundError:
        raise DataError(f"{path}: index file not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed index ({exc.msg})") from exc
    if header.get("format") != "odmds-dense-index/1":
        raise DataError(f"{path}: not a dense index file")
    if len(records) != header["count"]:
        raise DataError(f"{path}: header says {header['count']} vectors, found {len(records)}")
    vectors = np.array([r["vector"] for r in records], dtype=float).reshape(len(records), header["dimension"])
    index = DenseIndex([r["doc_id"] for r in records], vectors, header["provider_tag"])
    index.validate()
    return index
