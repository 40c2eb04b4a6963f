"""ROUGE-N / ROUGE-L with multi-reference max, and an LLM-judge (G-EVAL) harness."""
from __future__ import annotations

import logging
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import DEFAULT_TOKENIZER, QueryInstance, TokenizerConfig, tokenize
from .errors import DataError
from .llm import LlmClient, llm_complete
from .prompts import PromptTemplate, default_templates, render_prompt
from .summarization import SummaryRecord

log = logging.getLogger(__name__)

VARIANTS = ("rouge1", "rouge2", "rougeL")
DIMENSIONS = ("consistency", "relevance")


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float
    variant: str


def _score(overlap: int, n_cand: int, n_ref: int, variant: str) -> RougeScore:
    p = overlap / n_cand if n_cand else 0.0
    r = overlap / n_ref if n_ref else 0.0
    f = 2 * p * r / (p + r) if p + r > 0 else 0.0
    return RougeScore(p, r, f, variant)


def ngram_counts(tokens: Sequence[str], n: int) -> Counter:
    if n < 1:
        raise ValueError("n must be >= 1")
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def rouge_n(candidate: str, reference: str, n: int = 2, cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> RougeScore:
    cand = ngram_counts(tokenize(candidate, cfg), n)
    ref = ngram_counts(tokenize(reference, cfg), n)
    overlap = sum((cand & ref).values())
    return _score(overlap, sum(cand.values()), sum(ref.values()), f"rouge{n}")


def lcs_length(a: Sequence, b: Sequence) -> int:
    """Length of the longest common subsequence, bit-parallel over ``a``.

    Runs in O(len(a) * len(b) / wordsize) using Python integers as bit vectors.
    """
    if not a or not b:
        return 0
    masks: dict = {}
    for i, tok in enumerate(a):
        masks[tok] = masks.get(tok, 0) | (1 << i)
    full = (1 << len(a)) - 1
    v = full
    for tok in b:
        u = v & masks.get(tok, 0)
        v = ((v + u) | (v - u)) & full
    return len(a) - bin(v).count("1")


def rouge_l(candidate: str, reference: str, cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> RougeScore:
    c, r = tokenize(candidate, cfg), tokenize(reference, cfg)
    return _score(lcs_length(c, r), len(c), len(r), "rougeL")


def rouge(candidate: str, reference: str, variant: str, cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> RougeScore:
    if variant == "rougeL":
        return rouge_l(candidate, reference, cfg)
    if variant in ("rouge1", "rouge2"):
        return rouge_n(candidate, reference, int(variant[-1]), cfg)
    raise ValueError(f"unknown ROUGE variant {variant!r}")


def multi_ref_rouge(candidate: str, references: Sequence[str], variant: str = "rouge2",
                    cfg: TokenizerConfig = DEFAULT_TOKENIZER) -> RougeScore:
    """Best score over references by F1 (first reference wins ties)."""
    if not references:
        raise DataError("multi_ref_rouge needs at least one reference")
    best = None
    for ref in references:
        s = rouge(candidate, ref, variant, cfg)
        if best is None or s.f1 > best.f1:
            best = s
    return best


@dataclass(frozen=True)
class GevalScore:
    dimension: str
    raw: float | None
    parse_failures: int = 0


_SCORE_RE = re.compile(r"(?<!\d)([1-5])(?![\d])")


def parse_geval_reply(text: str) -> int | None:
    """First standalone integer 1-5 in the judge's reply, if any."""
    m = _SCORE_RE.search(text)
    return int(m.group(1)) if m else None


def geval_score(prediction: str, reference: str, dimension: str, llm: LlmClient,
                templates: Mapping[str, PromptTemplate] | None = None) -> GevalScore:
    """Judge ``prediction`` against ``reference`` (which stands in for the source).

    One retry on an unparseable reply; a second failure is recorded, not raised.
    """
    if dimension not in DIMENSIONS:
        raise ValueError(f"unknown G-EVAL dimension {dimension!r}")
    if not prediction.strip() or not reference.strip():
        raise DataError("G-EVAL needs a non-empty prediction and reference")
    tpl = (templates or default_templates())[f"geval_{dimension}"]
    req = render_prompt(tpl, source=reference, summary=prediction, max_output_tokens=8,
                        temperature=0.0, tag=f"geval_{dimension}")
    for _ in range(2):
        value = parse_geval_reply(llm_complete(req, llm).text)
        if value is not None:
            return GevalScore(dimension, float(value), 0)
    log.warning("G-EVAL %s: unparseable judge reply twice; excluded from means", dimension)
    return GevalScore(dimension, None, 1)


@dataclass
class SummEvalRow:
    strategy: str
    retriever: str
    n: int
    r1: float
    r2: float
    rl: float
    geval_consistency: float | None = None
    geval_relevance: float | None = None
    geval_combined: float | None = None
    parse_failures: int = 0
    bs: float | None = None  # filled by an external BERTScore scorer, if any
    per_query: list[dict] = field(default_factory=list)

    def to_json(self, with_per_query: bool = True) -> dict:
        d = {
            "strategy": self.strategy,
            "retriever": self.retriever,
            "r1": self.r1,
            "r2": self.r2,
            "rl": self.rl,
            "geval_consistency": self.geval_consistency,
            "geval_relevance": self.geval_relevance,
            "geval_combined": self.geval_combined,
            "bs": self.bs,
            "n": self.n,
            "parse_failures": self.parse_failures,
        }
        if with_per_query:
            d["per_query"] = self.per_query
        return d


@dataclass
class SummEvalReport:
    rows: list[SummEvalRow]

    def to_json(self) -> dict:
        return {"rows": [r.to_json() for r in self.rows]}


def _mean(xs: list[float]) -> float | None:
    return sum(xs) / len(xs) if xs else None


def evaluate_summaries(summaries: Sequence[SummaryRecord], query_instances: Sequence[QueryInstance],
                       llm: LlmClient | None = None, cfg: TokenizerConfig = DEFAULT_TOKENIZER,
                       templates: Mapping[str, PromptTemplate] | None = None) -> SummEvalReport:
    """Per (strategy, retriever) means of multi-reference ROUGE F1 (x100) and, with a judge, G-EVAL.

    G-EVAL uses the first reference; the combined score is the mean of the two
    dimension means.
    """
    by_id = {q.query_id: q for q in query_instances}
    groups: dict[tuple[str, str], list[SummaryRecord]] = defaultdict(list)
    for s in summaries:
        if s.query_id not in by_id:
            raise DataError(f"summary for unknown query_id {s.query_id!r}")
        groups[(s.strategy, s.retriever_tag)].append(s)

    rows = []
    for (strategy, retriever), recs in sorted(groups.items()):
        per_query = []
        geval: dict[str, list[float]] = {d: [] for d in DIMENSIONS}
        failures = 0
        for rec in sorted(recs, key=lambda r: r.query_id):
            refs = by_id[rec.query_id].references
            entry = {"query_id": rec.query_id}
            for v in VARIANTS:
                entry[v] = multi_ref_rouge(rec.summary, refs, v, cfg).f1
            if llm is not None:
                for dim in DIMENSIONS:
                    g = geval_score(rec.summary, refs[0], dim, llm, templates)
                    entry[f"geval_{dim}"] = g.raw
                    failures += g.parse_failures
                    if g.raw is not None:
                        geval[dim].append(g.raw)
            per_query.append(entry)
        row = SummEvalRow(
            strategy, retriever, len(per_query),
            *(round(100 * _mean([e[v] for e in per_query]), 2) for v in VARIANTS),
            parse_failures=failures, per_query=per_query,
        )
        if llm is not None:
            row.geval_consistency = _mean(geval["consistency"])
            row.geval_relevance = _mean(geval["relevance"])
            dims = [x for x in (row.geval_consistency, row.geval_relevance) if x is not None]
            row.geval_combined = _mean(dims) if len(dims) == 2 else None
        rows.append(row)
    return SummEvalReport(rows)


def format_summary_table(rows: Sequence[SummEvalRow | dict]) -> str:
    """Aligned text table: Strategy, Retriever, R-1, R-2, R-L, BS, G-EVAL (con/rel/combined)."""
    header = ["Strategy", "Retriever", "R-1", "R-2", "R-L", "BS", "G-E con", "G-E rel", "G-EVAL", "n"]
    body = []
    for row in rows:
        d = row.to_json(with_per_query=False) if isinstance(row, SummEvalRow) else row

        def num(x, fmt="{:.2f}"):
            return "-" if x is None else fmt.format(x)

        body.append([d["strategy"], d["retriever"], num(d["r1"]), num(d["r2"]), num(d["rl"]),
                     num(d.get("bs")), num(d["geval_consistency"]), num(d["geval_relevance"]),
                     num(d["geval_combined"]), str(d["n"])])
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]

    def fmt_row(r):
        return "  ".join([r[0].ljust(widths[0]), r[1].ljust(widths[1])]
                         + [c.rjust(w) for c, w in zip(r[2:], widths[2:])]).rstrip()

    return "\n".join([fmt_row(header), "-" * len(fmt_row(header))] + [fmt_row(r) for r in body]) + "\n"
