"""Documents, query instances, tokenization, truncation and chunking.

Everything downstream measures text in tokens produced here, so retrieval,
summarization budgets and ROUGE all agree on what a "word" is.
"""
from __future__ import annotations

import hashlib
import json
import os
import re
import unicodedata
from dataclasses import dataclass, field
from typing import Callable, Iterable, Iterator, Sequence

from ._io import atomic_write_text, dumps_line, read_jsonl
from .errors import DataError

__all__ = [
    "TokenizerConfig",
    "Document",
    "Corpus",
    "QueryInstance",
    "Chunk",
    "register_tokenizer",
    "token_spans",
    "tokenize",
    "count_tokens",
    "truncate_to_budget",
    "chunk_text",
    "load_corpus",
    "write_corpus",
    "load_queries",
    "write_queries",
    "validate_queries",
]

Span = tuple[int, int]
SpanFn = Callable[[str], list[Span]]

_WS_RE = re.compile(r"\S+")
_WORD_RE = re.compile(r"\w+")


def _is_punct(ch: str) -> bool:
    return unicodedata.category(ch)[0] in "PS"


def _whitespace_spans(text: str) -> list[Span]:
    return [m.span() for m in _WS_RE.finditer(text)]


def _word_spans(text: str) -> list[Span]:
    return [m.span() for m in _WORD_RE.finditer(text)]


_SPLITTERS: dict[str, SpanFn] = {
    "whitespace": _whitespace_spans,
    "unicode-word": _word_spans,
}


def register_tokenizer(mode: str, spans: SpanFn) -> None:
    """Plug in an extra tokenizer (e.g. a subword model) under ``mode``.

    ``spans`` maps text to ``[start, end)`` character offsets of each token,
    in order and non-overlapping. Truncation and chunking rely on offsets,
    so a plugged tokenizer must provide them.
    """
    _SPLITTERS[mode] = spans


@dataclass(frozen=True)
class TokenizerConfig:
    mode: str = "whitespace"
    lowercase: bool = True
    strip_punctuation: bool = True

    def __post_init__(self):
        if self.mode not in _SPLITTERS:
            raise DataError(f"unknown tokenizer mode {self.mode!r}; known: {sorted(_SPLITTERS)}")

    def to_dict(self) -> dict:
        return {"mode": self.mode, "lowercase": self.lowercase, "strip_punctuation": self.strip_punctuation}

    @classmethod
    def from_dict(cls, d: dict | None) -> "TokenizerConfig":
        return cls(**(d or {}))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]


DEFAULT_TOKENIZER = TokenizerConfig()


def token_spans(text: str, cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> list[Span]:
    """Character spans of the tokens of ``text``, after punctuation stripping."""
    spans = _SPLITTERS[cfg.mode](text)
    if not cfg.strip_punctuation:
        return spans
    out = []
    for start, end in spans:
        while start < end and _is_punct(text[start]):
            start += 1
        while end > start and _is_punct(text[end - 1]):
            end -= 1
        if start < end:
            out.append((start, end))
    return out


def tokenize(text: str, cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> list[str]:
    """Tokenize ``text`` under ``cfg``.

    >>> tokenize("The cat, sat.")
    ['the', 'cat', 'sat']
    """
    toks = [text[s:e] for s, e in token_spans(text, cfg)]
    if cfg.lowercase:
        toks = [t.lower() for t in toks]
    return toks


def count_tokens(text: str, cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> int:
    return len(token_spans(text, cfg))


def truncate_to_budget(text: str, budget: int, cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> str:
    """Prefix of ``text`` ending right after its ``budget``-th token."""
    if budget < 0:
        raise ValueError("budget must be >= 0")
    if budget == 0:
        return ""
    spans = token_spans(text, cfg)
    if budget >= len(spans):
        return text
    return text[: spans[budget - 1][1]]


@dataclass(frozen=True)
class Chunk:
    parent_doc_id: str | None
    ordinal: int
    text: str
    token_span: tuple[int, int]

    @property
    def n_tokens(self) -> int:
        return self.token_span[1] - self.token_span[0]


def chunk_text(
    text: str,
    chunk_budget: int,
    overlap: int = 0,
    cfg: TokenizerConfig = DEFAULT_TOKENIZER,
    parent_doc_id: str | None = None,
) -> list[Chunk]:
    """Split ``text`` into fixed-stride token windows.

    Windows hold at most ``chunk_budget`` tokens and consecutive windows share
    ``overlap`` tokens. Chunk text is the original substring from the first
    token's start to the last token's end.
    """
    if chunk_budget < 1:
        raise ValueError("chunk_budget must be >= 1")
    if not 0 <= overlap < chunk_budget:
        raise ValueError(f"overlap must satisfy 0 <= overlap < chunk_budget (got {overlap}, {chunk_budget})")
    spans = token_spans(text, cfg)
    n = len(spans)
    stride = chunk_budget - overlap
    chunks: list[Chunk] = []
    start = 0
    while start < n:
        end = min(start + chunk_budget, n)
        piece = text[spans[start][0] : spans[end - 1][1]]
        chunks.append(Chunk(parent_doc_id, len(chunks), piece, (start, end)))
        if end == n:
            break
        start += stride
    return chunks


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str
    title: str | None = None
    token_count: int = -1

    def to_json(self) -> dict:
        return {"doc_id": self.doc_id, "title": self.title, "text": self.text}


def make_document(doc_id: str, text: str, title: str | None = None,
                  cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> Document:
    if not isinstance(doc_id, str) or not doc_id:
        raise DataError("doc_id must be a non-empty string")
    if not isinstance(text, str) or not text:
        raise DataError(f"document {doc_id!r} has empty text")
    return Document(doc_id, text, title, count_tokens(text, cfg))


@dataclass(frozen=True)
class Corpus:
    """Ordered, immutable document collection. Order is the on-disk order."""

    documents: tuple[Document, ...]
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER
    _by_id: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        by_id = {}
        for d in self.documents:
            if d.doc_id in by_id:
                raise DataError(f"duplicate doc_id {d.doc_id!r}")
            by_id[d.doc_id] = d
        object.__setattr__(self, "documents", tuple(self.documents))
        object.__setattr__(self, "_by_id", by_id)

    @classmethod
    def from_texts(cls, items: Iterable[tuple[str, str]] | dict[str, str],
                   tokenizer: TokenizerConfig = DEFAULT_TOKENIZER) -> "Corpus":
        pairs = items.items() if isinstance(items, dict) else items
        return cls(tuple(make_document(i, t, cfg=tokenizer) for i, t in pairs), tokenizer)

    def __len__(self) -> int:
        return len(self.documents)

    def __iter__(self) -> Iterator[Document]:
        return iter(self.documents)

    def __contains__(self, doc_id: object) -> bool:
        return doc_id in self._by_id

    def __getitem__(self, doc_id: str) -> Document:
        try:
            return self._by_id[doc_id]
        except KeyError:
            raise DataError(f"unknown doc_id {doc_id!r}") from None

    @property
    def doc_ids(self) -> list[str]:
        return [d.doc_id for d in self.documents]


@dataclass(frozen=True)
class QueryInstance:
    query_id: str
    query: str
    gold_doc_ids: tuple[str, ...]
    references: tuple[str, ...]

    def __post_init__(self):
        if not self.query_id:
            raise DataError("query_id must be non-empty")
        if not self.references:
            raise DataError(f"query {self.query_id!r} has no reference summaries")
        object.__setattr__(self, "gold_doc_ids", tuple(self.gold_doc_ids))
        object.__setattr__(self, "references", tuple(self.references))

    @property
    def gold(self) -> set[str]:
        return set(self.gold_doc_ids)

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "query": self.query,
            "gold_doc_ids": list(self.gold_doc_ids),
            "references": list(self.references),
        }


def load_corpus(path: str | os.PathLike, tokenizer: TokenizerConfig = DEFAULT_TOKENIZER) -> Corpus:
    docs: list[Document] = []
    seen: dict[str, int] = {}
    for lineno, obj in read_jsonl(path):
        doc_id, text, title = obj.get("doc_id"), obj.get("text"), obj.get("title")
        if not isinstance(doc_id, str) or not doc_id:
            raise DataError(f"{path}:{lineno}: missing or empty doc_id")
        if doc_id in seen:
            raise DataError(f"{path}:{lineno}: duplicate doc_id {doc_id!r} (first seen on line {seen[doc_id]})")
        if not isinstance(text, str) or not text:
            raise DataError(f"{path}:{lineno}: document {doc_id!r} has empty text")
        if title is not None and not isinstance(title, str):
            raise DataError(f"{path}:{lineno}: title must be a string or null")
        seen[doc_id] = lineno
        docs.append(Document(doc_id, text, title, count_tokens(text, tokenizer)))
    return Corpus(tuple(docs), tokenizer)


def write_corpus(corpus: Corpus | Iterable[Document], path: str | os.PathLike) -> None:
    atomic_write_text(path, "".join(dumps_line(d.to_json()) for d in corpus))


def load_queries(path: str | os.PathLike, corpus: Corpus | None = None) -> list[QueryInstance]:
    """Load query instances; with ``corpus``, also check that gold ids resolve."""
    out: list[QueryInstance] = []
    seen: set[str] = set()
    for lineno, obj in read_jsonl(path):
        qid = obj.get("query_id")
        query = obj.get("query")
        gold = obj.get("gold_doc_ids")
        refs = obj.get("references")
        if not isinstance(qid, str) or not qid:
            raise DataError(f"{path}:{lineno}: missing or empty query_id")
        if qid in seen:
            raise DataError(f"{path}:{lineno}: duplicate query_id {qid!r}")
        if not isinstance(query, str) or not query.strip():
            raise DataError(f"{path}:{lineno}: query {qid!r} is empty")
        if not isinstance(gold, list) or not gold:
            raise DataError(f"{path}:{lineno}: query {qid!r} has no gold_doc_ids")
        if not isinstance(refs, list) or not refs or not all(isinstance(r, str) for r in refs):
            raise DataError(f"{path}:{lineno}: query {qid!r} needs a non-empty list of references")
        seen.add(qid)
        out.append(QueryInstance(qid, query, tuple(gold), tuple(refs)))
    if corpus is not None:
        validate_queries(out, corpus)
    return out


def validate_queries(queries: Sequence[QueryInstance], corpus: Corpus) -> None:
    for q in queries:
        for d in q.gold_doc_ids:
            if d not in corpus:
                raise DataError(f"query {q.query_id!r}: gold doc {d!r} not in corpus")


def write_queries(queries: Iterable[QueryInstance], path: str | os.PathLike) -> None:
    atomic_write_text(path, "".join(dumps_line(q.to_json()) for q in queries))
