"""Ranked result lists and the TREC run file format."""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from typing import Iterable

from .._io import atomic_write_text
from ..errors import DataError


@dataclass(frozen=True)
class RankedDoc:
    doc_id: str
    score: float
    rank: int


def rank_scores(pairs: Iterable[tuple[str, float]], k: int | None = None) -> list[RankedDoc]:
    """Sort ``(doc_id, score)`` by score descending, doc_id ascending; keep ``k``."""
    ordered = sorted(pairs, key=lambda p: (-p[1], p[0]))
    if k is not None:
        ordered = ordered[:k]
    return [RankedDoc(d, float(s), r) for r, (d, s) in enumerate(ordered, start=1)]


@dataclass
class RetrievalRun:
    retriever_tag: str
    k: int
    results: dict[str, list[RankedDoc]] = field(default_factory=dict)
    meta: dict[str, str] = field(default_factory=dict)

    def ranked_ids(self, query_id: str) -> list[str]:
        return [r.doc_id for r in self.results.get(query_id, [])]

    def validate(self) -> None:
        for qid, docs in self.results.items():
            if len(docs) > self.k:
                raise DataError(f"run {self.retriever_tag!r}: query {qid!r} has {len(docs)} > k={self.k} results")
            ids = [d.doc_id for d in docs]
            if len(set(ids)) != len(ids):
                raise DataError(f"run {self.retriever_tag!r}: duplicate doc_id for query {qid!r}")


def format_run(run: RetrievalRun) -> str:
    """TREC run text. The first line is a ``#`` header carrying ``k`` and metadata."""
    header = {"retriever": run.retriever_tag, "k": str(run.k), **run.meta}
    lines = ["# " + " ".join(f"{key}={val}" for key, val in header.items())]
    for qid in sorted(run.results):
        for r in run.results[qid]:
            lines.append(f"{qid} Q0 {r.doc_id} {r.rank} {r.score:.8f} {run.retriever_tag}")
    return "\n".join(lines) + "\n"


def write_run(run: RetrievalRun, path: str | os.PathLike) -> None:
    atomic_write_text(path, format_run(run))


def read_run(path: str | os.PathLike) -> RetrievalRun:
    """Parse a TREC run file. Header comments are optional."""
    meta: dict[str, str] = {}
    results: dict[str, list[RankedDoc]] = {}
    tag = None
    try:
        fh = open(path, encoding="utf-8")
    except FileNotFoundError:
        raise DataError(f"{path}: run file not found") from None
    with fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            if line.startswith("#"):
                for item in line[1:].split():
                    key, _, val = item.partition("=")
                    meta[key] = val
                continue
            parts = line.split()
            if len(parts) != 6:
                raise DataError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            qid, _, doc_id, rank, score, tag = parts
            try:
                results.setdefault(qid, []).append(RankedDoc(doc_id, float(score), int(rank)))
            except ValueError:
                raise DataError(f"{path}:{lineno}: bad rank or score") from None
    for docs in results.values():
        docs.sort(key=lambda r: r.rank)
    retriever = meta.pop("retriever", tag or "unknown")
    k = int(meta.pop("k", max((len(v) for v in results.values()), default=0)))
    run = RetrievalRun(retriever, k, results, meta)
    run.validate()
    return run
