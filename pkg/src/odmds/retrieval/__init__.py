from .dense import DenseIndex, build_dense_index, load_dense_index, save_dense_index, search_dense
from .embedding import (
    EmbeddingProviderConfig,
    HashingEmbedder,
    RemoteEmbedder,
    embed_long_document,
    embed_text,
    make_embedder,
)
from .runs import RankedDoc, RetrievalRun, format_run, rank_scores, read_run, write_run
from .sparse import (
    DEFAULT_B,
    DEFAULT_K1,
    SparseIndex,
    bm25_score,
    build_sparse_index,
    load_sparse_index,
    save_sparse_index,
    search_sparse,
)

__all__ = [
    "DEFAULT_B", "DEFAULT_K1", "DenseIndex", "EmbeddingProviderConfig", "HashingEmbedder",
    "RankedDoc", "RemoteEmbedder", "RetrievalRun", "SparseIndex", "bm25_score",
    "build_dense_index", "build_sparse_index", "embed_long_document", "embed_text",
    "format_run", "load_dense_index", "load_sparse_index", "make_embedder", "rank_scores",
    "read_run", "save_dense_index", "save_sparse_index", "search_dense", "search_sparse",
    "write_run",
]
