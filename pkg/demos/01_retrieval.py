"""
Sparse and dense retrieval over a tiny corpus
=============================================

BM25 and a feature-hashing embedder, side by side.
"""

from odmds.corpus import Corpus
from odmds.retrieval import (
    EmbeddingProviderConfig,
    HashingEmbedder,
    build_dense_index,
    build_sparse_index,
    search_dense,
    search_sparse,
)

corpus = Corpus.from_texts({
    "harbor": "The harbor wall cracked in the storm and the council paid for repairs.",
    "garden": "Volunteers planted tomatoes and beans in the community garden.",
    "budget": "The council budget moved money from parks to harbor repairs.",
    "school": "The school opened a new library wing in the spring.",
})

# BM25 keeps an inverted index; documents with a zero score are left out
sparse = build_sparse_index(corpus)
for hit in search_sparse(sparse, "harbor repairs budget", k=3):
    print(f"bm25   {hit.rank}  {hit.doc_id:<7} {hit.score:.4f}")

# dense vectors are unit length, so the dot product is the cosine
embedder = HashingEmbedder(EmbeddingProviderConfig(dimension=256, seed=0))
dense = build_dense_index(corpus, embedder)
print("vector norms:", dense.vectors.shape, (dense.vectors ** 2).sum(axis=1).round(6))
for hit in search_dense(dense, "harbor repairs budget", embedder, k=3):
    print(f"dense  {hit.rank}  {hit.doc_id:<7} {hit.score:.4f}")

# documents longer than the provider limit are chunked and length-weighted
long_cfg = EmbeddingProviderConfig(dimension=256, max_input_tokens=5)
short_limit = build_dense_index(corpus, HashingEmbedder(long_cfg))
print("same ids, different vectors:", short_limit.doc_ids == dense.doc_ids,
      bool((short_limit.vectors != dense.vectors).any()))
