"""Open-domain multi-document summarization: build datasets, retrieve, summarize, evaluate."""

from .corpus import (
    Chunk,
    Corpus,
    Document,
    QueryInstance,
    TokenizerConfig,
    chunk_text,
    load_corpus,
    load_queries,
    tokenize,
    truncate_to_budget,
)
from .errors import DataError, EmbeddingError, LlmError, OdmdsError, ProviderError

__version__ = "0.1.0"
