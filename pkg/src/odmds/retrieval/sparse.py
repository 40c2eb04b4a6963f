"""BM25 over an in-memory inverted index."""
from __future__ import annotations

import bisect
import json
import math
import os
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable

from .._io import atomic_write_text
from ..corpus import Corpus, TokenizerConfig, tokenize
from ..errors import DataError
from .runs import RankedDoc, rank_scores

DEFAULT_K1 = 1.2
DEFAULT_B = 0.75


@dataclass(frozen=True)
class SparseIndex:
    postings: dict[str, list[tuple[int, int]]]
    doc_lengths: list[int]
    avg_doc_length: float
    doc_count: int
    doc_freq: dict[str, int]
    doc_ids: list[str]
    tokenizer: TokenizerConfig
    _doc_pos: dict[str, list[int]] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        # doc indices of each postings list, for bisect lookups of tf
        object.__setattr__(
            self, "_doc_pos", {t: [d for d, _ in plist] for t, plist in self.postings.items()}
        )

    def tf(self, term: str, doc_index: int) -> int:
        pos = self._doc_pos.get(term)
        if not pos:
            return 0
        i = bisect.bisect_left(pos, doc_index)
        if i < len(pos) and pos[i] == doc_index:
            return self.postings[term][i][1]
        return 0

    def index_of(self, doc_id: str) -> int:
        try:
            return self.doc_ids.index(doc_id)
        except ValueError:
            raise DataError(f"unknown doc_id {doc_id!r}") from None


def build_sparse_index(corpus: Corpus) -> SparseIndex:
    if len(corpus) == 0:
        raise DataError("cannot index an empty corpus")
    postings: dict[str, list[tuple[int, int]]] = defaultdict(list)
    lengths = []
    for i, doc in enumerate(corpus):
        toks = tokenize(doc.text, corpus.tokenizer)
        if not toks:
            raise DataError(f"document {doc.doc_id!r} has no tokens under the corpus tokenizer")
        lengths.append(len(toks))
        for term, tf in Counter(toks).items():
            postings[term].append((i, tf))
    n = len(lengths)
    return SparseIndex(
        postings=dict(postings),
        doc_lengths=lengths,
        avg_doc_length=sum(lengths) / n,
        doc_count=n,
        doc_freq={t: len(p) for t, p in postings.items()},
        doc_ids=corpus.doc_ids,
        tokenizer=corpus.tokenizer,
    )


def idf(df: int, n: int) -> float:
    return math.log(1.0 + (n - df + 0.5) / (df + 0.5))


def _term_weight(tf: int, dl: int, avgdl: float, k1: float, b: float) -> float:
    return tf * (k1 + 1) / (tf + k1 * (1 - b + b * dl / avgdl))


def _check_params(k1: float, b: float) -> None:
    if k1 <= 0 or not 0 <= b <= 1:
        raise ValueError(f"BM25 needs k1 > 0 and 0 <= b <= 1 (got k1={k1}, b={b})")


def bm25_score(query_terms: Iterable[str], doc_index: int, index: SparseIndex,
               k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> float:
    """Okapi BM25 with the non-negative ``ln(1 + (N-df+.5)/(df+.5))`` IDF.

    Repeated query terms contribute once per occurrence.
    """
    _check_params(k1, b)
    dl = index.doc_lengths[doc_index]
    score = 0.0
    for term in query_terms:
        tf = index.tf(term, doc_index)
        if tf == 0:
            continue
        score += idf(index.doc_freq[term], index.doc_count) * _term_weight(
            tf, dl, index.avg_doc_length, k1, b
        )
    return score


def search_sparse(index: SparseIndex, query: str, k: int,
                  k1: float = DEFAULT_K1, b: float = DEFAULT_B) -> list[RankedDoc]:
    """Top-``k`` documents by BM25. Documents scoring 0 are never returned."""
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_params(k1, b)
    scores: dict[int, float] = defaultdict(float)
    for term in tokenize(query, index.tokenizer):
        plist = index.postings.get(term)
        if not plist:
            continue
        w = idf(index.doc_freq[term], index.doc_count)
        for doc_index, tf in plist:
            scores[doc_index] += w * _term_weight(tf, index.doc_lengths[doc_index], index.avg_doc_length, k1, b)
    pairs = [(index.doc_ids[i], s) for i, s in scores.items() if s > 0.0]
    return rank_scores(pairs, k)


def save_sparse_index(index: SparseIndex, path: str | os.PathLike) -> None:
    payload = {
        "format": "odmds-sparse-index/1",
        "tokenizer": index.tokenizer.to_dict(),
        "tokenizer_fingerprint": index.tokenizer.fingerprint(),
        "doc_count": index.doc_count,
        "avg_doc_length": index.avg_doc_length,
        "doc_ids": index.doc_ids,
        "doc_lengths": index.doc_lengths,
        "doc_freq": dict(sorted(index.doc_freq.items())),
        "postings": {t: [list(p) for p in index.postings[t]] for t in sorted(index.postings)},
    }
    atomic_write_text(path, json.dumps(payload, ensure_ascii=False, separators=(",", ":")) + "\n")


def load_sparse_index(path: str | os.PathLike, tokenizer: TokenizerConfig | None = None) -> SparseIndex:
    """Load an index; if ``tokenizer`` is given it must match the one used at build time."""
    try:
        with open(path, encoding="utf-8") as fh:
            payload = json.load(fh)
    except FileNotFoundError:
        raise DataError(f"{path}: index file not found") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: malformed index ({exc.msg})") from exc
    if payload.get("format") != "odmds-sparse-index/1":
        raise DataError(f"{path}: not a sparse index file")
    stored = TokenizerConfig.from_dict(payload["tokenizer"])
    if tokenizer is not None and tokenizer.fingerprint() != payload["tokenizer_fingerprint"]:
        raise DataError(
            f"{path}: index was built with tokenizer {stored.to_dict()}, not {tokenizer.to_dict()}"
        )
    return SparseIndex(
        postings={t: [tuple(p) for p in plist] for t, plist in payload["postings"].items()},
        doc_lengths=payload["doc_lengths"],
        avg_doc_length=payload["avg_doc_length"],
        doc_count=payload["doc_count"],
        doc_freq=payload["doc_freq"],
        doc_ids=payload["doc_ids"],
        tokenizer=stored,
    )
