"""Query-focused summarization of retrieved documents under a context budget.

Four strategies: truncate the concatenation (``truncate_all``), truncate each
document to an equal share (``truncate_one``), chunk-summarize-then-combine
(``map_reduce``) and sequential refinement (``refine``).

Budgets count document tokens only. The prompt template, the query and the
``DOCUMENT k:`` section headers are overhead on top of ``context_budget``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .corpus import DEFAULT_TOKENIZER, Document, TokenizerConfig, chunk_text, count_tokens, truncate_to_budget
from .errors import DataError
from .llm import LlmClient, llm_complete
from .prompts import PromptTemplate, default_templates, render_prompt

log = logging.getLogger(__name__)

STRATEGIES = ("truncate_all", "truncate_one", "map_reduce", "refine")
ORDERS = ("high_to_low", "low_to_high")


@dataclass(frozen=True)
class StrategyConfig:
    strategy: str = "truncate_all"
    context_budget: int = 3000
    chunk_budget: int | None = None  # map_reduce; defaults to context_budget
    overlap: int = 0
    order: str | None = None  # refine only; defaults to high_to_low
    max_output_tokens: int = 512
    template: str = "story"  # single-call template: story or meeting
    temperature: float = 0.0
    max_concurrency: int = 1
    tokenizer: TokenizerConfig = DEFAULT_TOKENIZER

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise DataError(f"unknown strategy {self.strategy!r}; choose from {STRATEGIES}")
        if self.context_budget < 1:
            raise DataError("context_budget must be >= 1")
        if self.order is not None:
            if self.strategy != "refine":
                raise DataError("order applies to the refine strategy only")
            if self.order not in ORDERS:
                raise DataError(f"order must be one of {ORDERS}")
        if self.chunk_budget is not None and not 1 <= self.chunk_budget <= self.context_budget:
            raise DataError("chunk_budget must be between 1 and context_budget")
        if not 0 <= self.overlap < self.effective_chunk_budget:
            raise DataError("overlap must satisfy 0 <= overlap < chunk_budget")

    @property
    def effective_chunk_budget(self) -> int:
        return self.chunk_budget or self.context_budget

    @property
    def label(self) -> str:
        if self.strategy == "refine":
            return f"refine_{self.order or 'high_to_low'}"
        return self.strategy


@dataclass
class SummaryRecord:
    query_id: str
    strategy: str
    retriever_tag: str
    summary: str
    llm_calls: int
    docs_used: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "query_id": self.query_id,
            "strategy": self.strategy,
            "retriever": self.retriever_tag,
            "summary": self.summary,
            "llm_calls": self.llm_calls,
            "docs_used": list(self.docs_used),
        }

    @classmethod
    def from_json(cls, d: dict) -> "SummaryRecord":
        return cls(d["query_id"], d["strategy"], d["retriever"], d["summary"], d["llm_calls"], d["docs_used"])


def section(k: int, text: str) -> str:
    return f"DOCUMENT {k}:\n{text}"


def join_sections(texts: Sequence[str]) -> str:
    return "\n\n".join(section(k, t) for k, t in enumerate(texts, start=1))


def _templates(templates: Mapping[str, PromptTemplate] | None) -> Mapping[str, PromptTemplate]:
    return templates if templates is not None else default_templates()


def _call(llm: LlmClient, tpl: PromptTemplate, cfg: StrategyConfig, **values) -> str:
    req = render_prompt(tpl, max_output_tokens=cfg.max_output_tokens, temperature=cfg.temperature, **values)
    return llm_complete(req, llm).text.strip()


def _single_call(parts: list[tuple[str, str]], query: str, cfg: StrategyConfig, llm: LlmClient,
                 templates) -> tuple[str, list[str]]:
    """One call over pre-truncated ``(doc_id, text)`` parts; empty parts are dropped."""
    used = [(d, t) for d, t in parts if t]
    tpl = _templates(templates)[cfg.template]
    summary = _call(llm, tpl, cfg, docs_text=join_sections([t for _, t in used]), query=query)
    return summary, [d for d, _ in used]


def _require_docs(docs: Sequence[Document]) -> None:
    if not docs:
        raise DataError("need at least one document to summarize")


def summarize_truncate_all(docs: Sequence[Document], query: str, cfg: StrategyConfig, llm: LlmClient,
                           templates: Mapping[str, PromptTemplate] | None = None, *,
                           query_id: str = "", retriever_tag: str = "") -> SummaryRecord:
    """Keep the first ``context_budget`` tokens of the rank-ordered concatenation."""
    _require_docs(docs)
    remaining = cfg.context_budget
    parts = []
    for doc in docs:
        take = min(count_tokens(doc.text, cfg.tokenizer), remaining)
        if take == 0:
            break
        parts.append((doc.doc_id, truncate_to_budget(doc.text, take, cfg.tokenizer)))
        remaining -= take
    summary, used = _single_call(parts, query, cfg, llm, templates)
    return SummaryRecord(query_id, cfg.label, retriever_tag, summary, 1, used)


def truncate_one_shares(n_docs: int, budget: int) -> list[int]:
    """Equal integer shares; the remainder goes to the top-ranked document."""
    share = budget // n_docs
    if share == 0:
        raise DataError(
            f"context budget {budget} is smaller than the number of documents ({n_docs}); "
            "retrieve fewer documents or raise the budget"
        )
    shares = [share] * n_docs
    shares[0] += budget - share * n_docs
    return shares


def summarize_truncate_one(docs: Sequence[Document], query: str, cfg: StrategyConfig, llm: LlmClient,
                           templates: Mapping[str, PromptTemplate] | None = None, *,
                           query_id: str = "", retriever_tag: str = "") -> SummaryRecord:
    """Truncate every document to its share of the budget, then combine in rank order."""
    _require_docs(docs)
    shares = truncate_one_shares(len(docs), cfg.context_budget)
    parts = [(d.doc_id, truncate_to_budget(d.text, s, cfg.tokenizer)) for d, s in zip(docs, shares)]
    summary, used = _single_call(parts, query, cfg, llm, templates)
    return SummaryRecord(query_id, cfg.label, retriever_tag, summary, 1, used)


def summarize_map_reduce(docs: Sequence[Document], query: str, cfg: StrategyConfig, llm: LlmClient,
                         templates: Mapping[str, PromptTemplate] | None = None, *,
                         query_id: str = "", retriever_tag: str = "") -> SummaryRecord:
    """Summarize each chunk, then combine the partial summaries.

    When the partial summaries do not fit ``context_budget`` together they are
    re-chunked and collapsed with the reduce prompt until a single final call fits.
    """
    _require_docs(docs)
    tpls = _templates(templates)
    text = join_sections([d.text for d in docs])
    chunks = chunk_text(text, cfg.effective_chunk_budget, cfg.overlap, cfg.tokenizer)

    def map_one(chunk_text_: str) -> str:
        return _call(llm, tpls["map"], cfg, chunk=chunk_text_, query=query)

    if cfg.max_concurrency > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=cfg.max_concurrency) as pool:
            partials = list(pool.map(map_one, [c.text for c in chunks]))
    else:
        partials = [map_one(c.text) for c in chunks]
    calls = len(chunks)
    doc_ids = [d.doc_id for d in docs]
    if len(partials) == 1:
        return SummaryRecord(query_id, cfg.label, retriever_tag, partials[0], calls, doc_ids)

    while True:
        joined = "\n\n".join(partials)
        size = count_tokens(joined, cfg.tokenizer)
        if size <= cfg.context_budget:
            break
        groups = chunk_text(joined, cfg.context_budget, 0, cfg.tokenizer)
        partials = [_call(llm, tpls["reduce"], cfg, docs_text=g.text, query=query) for g in groups]
        calls += len(groups)
        if count_tokens("\n\n".join(partials), cfg.tokenizer) >= size:
            raise DataError(
                "map_reduce: collapsing partial summaries did not shrink them; "
                "lower max_output_tokens or raise context_budget"
            )
    final = _call(llm, tpls["reduce"], cfg, docs_text=joined, query=query)
    return SummaryRecord(query_id, cfg.label, retriever_tag, final, calls + 1, doc_ids)


def summarize_refine(docs: Sequence[Document], query: str, cfg: StrategyConfig, llm: LlmClient,
                     templates: Mapping[str, PromptTemplate] | None = None, *,
                     query_id: str = "", retriever_tag: str = "") -> SummaryRecord:
    """Fold documents one at a time into an interim summary.

    Each step's document is truncated to whatever budget the interim summary
    leaves free.
    """
    _require_docs(docs)
    tpls = _templates(templates)
    ordered = list(docs) if (cfg.order or "high_to_low") == "high_to_low" else list(reversed(docs))
    first = truncate_to_budget(ordered[0].text, cfg.context_budget, cfg.tokenizer)
    summary = _call(llm, tpls["refine_init"], cfg, chunk=first, query=query)
    for doc in ordered[1:]:
        used = count_tokens(summary, cfg.tokenizer)
        if used > cfg.context_budget:
            raise DataError(
                f"refine: interim summary ({used} tokens) exceeds the context budget ({cfg.context_budget})"
            )
        chunk = truncate_to_budget(doc.text, cfg.context_budget - used, cfg.tokenizer)
        summary = _call(llm, tpls["refine_step"], cfg, existing_summary=summary, chunk=chunk, query=query)
    return SummaryRecord(query_id, cfg.label, retriever_tag, summary, len(ordered), [d.doc_id for d in ordered])


_DISPATCH = {
    "truncate_all": summarize_truncate_all,
    "truncate_one": summarize_truncate_one,
    "map_reduce": summarize_map_reduce,
    "refine": summarize_refine,
}


def summarize(docs: Sequence[Document], query: str, cfg: StrategyConfig, llm: LlmClient,
              templates: Mapping[str, PromptTemplate] | None = None, *,
              query_id: str = "", retriever_tag: str = "") -> SummaryRecord:
    fn = _DISPATCH[cfg.strategy]
    return fn(docs, query, cfg, llm, templates, query_id=query_id, retriever_tag=retriever_tag)
