"""Set- and rank-based retrieval metrics with binary relevance."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import QueryInstance
from .errors import DataError
from .retrieval.runs import RetrievalRun

METRICS = ("p_at_k", "r_at_k", "ndcg", "map")


def _check(gold, k: int | None = None) -> None:
    if not gold:
        raise DataError("empty gold set: evaluation is undefined")
    if k is not None and k < 1:
        raise ValueError("k must be >= 1")


def _hits(ranked: Sequence[str], gold, k: int) -> int:
    return sum(1 for d in ranked[:k] if d in gold)


def precision_at_k(ranked: Sequence[str], gold, k: int) -> float:
    """Fraction of the top ``k`` that is relevant. Denominator is always ``k``."""
    _check(gold, k)
    return _hits(ranked, set(gold), k) / k


def recall_at_k(ranked: Sequence[str], gold, k: int) -> float:
    _check(gold, k)
    gold = set(gold)
    return _hits(ranked, gold, k) / len(gold)


def ndcg_at_k(ranked: Sequence[str], gold, k: int) -> float:
    _check(gold, k)
    gold = set(gold)
    dcg = sum(1.0 / math.log2(i + 2) for i, d in enumerate(ranked[:k]) if d in gold)
    idcg = sum(1.0 / math.log2(i + 2) for i in range(min(len(gold), k)))
    return dcg / idcg


def average_precision(ranked: Sequence[str], gold) -> float:
    _check(gold)
    gold = set(gold)
    hits = 0
    total = 0.0
    for i, d in enumerate(ranked, start=1):
        if d in gold:
            hits += 1
            total += hits / i
    return total / len(gold)


def _check_coverage(run: RetrievalRun, gold_map: Mapping[str, object]) -> None:
    missing = sorted(q for q in run.results if q not in gold_map)
    if missing:
        raise DataError(f"run query {missing[0]!r} has no gold documents")


def mean_average_precision(run: RetrievalRun, gold_map: Mapping[str, Sequence[str]]) -> float:
    """Mean AP over every query in ``gold_map``; queries absent from the run score 0."""
    _check_coverage(run, gold_map)
    if not gold_map:
        raise DataError("no queries to evaluate")
    return sum(average_precision(run.ranked_ids(q), g) for q, g in gold_map.items()) / len(gold_map)


@dataclass(frozen=True)
class TopKStrategy:
    name: str
    k: int

    def __str__(self) -> str:
        return f"{self.name}({self.k})"


def derive_topk(dataset: Sequence[QueryInstance]) -> dict[str, TopKStrategy]:
    """min / rounded mean / max of gold-document counts. The mean rounds half to even."""
    if not dataset:
        raise DataError("cannot derive top-k from an empty dataset")
    counts = [len(set(q.gold_doc_ids)) for q in dataset]
    mean = round(sum(counts) / len(counts))  # round() is half-to-even
    return {
        "min": TopKStrategy("min", min(counts)),
        "mean": TopKStrategy("mean", max(1, mean)),
        "max": TopKStrategy("max", max(counts)),
    }


@dataclass
class RetrievalReport:
    """One results row: means over queries, reported x100."""

    dataset: str
    strategy: str
    retriever: str
    k: int
    metrics: dict[str, float]
    per_query: list[dict] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "dataset": self.dataset,
            "strategy": self.strategy,
            "retriever": self.retriever,
            "k": self.k,
            "metrics": {m: round(100 * self.metrics[m], 2) for m in METRICS},
            "per_query": [
                {"query_id": row["query_id"], **{m: round(100 * row[m], 4) for m in METRICS}}
                for row in self.per_query
            ],
        }


def evaluate_run(run: RetrievalRun, gold_map: Mapping[str, Sequence[str]], k: int | None = None,
                 *, dataset: str = "", strategy: str = "") -> RetrievalReport:
    """Score ``run`` at cutoff ``k`` (default: the run's own k).

    The per-query ``map`` column holds that query's AP.
    """
    k = run.k if k is None else k
    if k < 1:
        raise ValueError("k must be >= 1")
    _check_coverage(run, gold_map)
    if not gold_map:
        raise DataError("no queries to evaluate")
    rows = []
    for qid in sorted(gold_map):
        gold = gold_map[qid]
        ranked = run.ranked_ids(qid)
        rows.append({
            "query_id": qid,
            "p_at_k": precision_at_k(ranked, gold, k),
            "r_at_k": recall_at_k(ranked, gold, k),
            "ndcg": ndcg_at_k(ranked, gold, k),
            "map": average_precision(ranked[:k], gold),
        })
    means = {m: sum(r[m] for r in rows) / len(rows) for m in METRICS}
    return RetrievalReport(dataset, strategy or run.meta.get("strategy", ""), run.retriever_tag, k, means, rows)


def format_retrieval_table(reports: Sequence[RetrievalReport | dict]) -> str:
    """Aligned text table with the columns Dataset, Top-k, Method, P@K, R@K, NDCG, MAP."""
    header = ["Dataset", "Top-k", "Method", "P@K", "R@K", "NDCG", "MAP"]
    body = []
    for rep in reports:
        d = rep.to_json() if isinstance(rep, RetrievalReport) else rep
        topk = f"{d['strategy']}({d['k']})" if d.get("strategy") else str(d["k"])
        body.append([d.get("dataset", ""), topk, d["retriever"]]
                    + [f"{d['metrics'][m]:.2f}" for m in METRICS])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]

    def fmt(row):
        left = [c.ljust(w) for c, w in zip(row[:3], widths[:3])]
        right = [c.rjust(w) for c, w in zip(row[3:], widths[3:])]
        return "  ".join(left + right).rstrip()

    rule = "-" * len(fmt(header))
    return "\n".join([fmt(header), rule] + [fmt(r) for r in body]) + "\n"
