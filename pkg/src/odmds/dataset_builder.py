"""Turning query-focused MDS data into open-domain MDS datasets.

Two source shapes are supported. Stories arrive as HTML split into chapter
documents, with queries rewritten to name the story. Meetings keep their
transcripts while similar queries across meetings are clustered, size-bounded
and merged into multi-meeting query/summary pairs.
"""
from __future__ import annotations

import html as html_lib
import logging
import re
from collections import Counter
from dataclasses import dataclass, field
from html.parser import HTMLParser
from typing import Mapping, Sequence

import numpy as np

from .corpus import Corpus, Document, QueryInstance, TokenizerConfig, make_document
from .errors import DataError, ProviderError
from .llm import LlmClient, llm_complete
from .prompts import PromptTemplate, default_templates, render_prompt
from .retrieval.embedding import Embedder, embed_text

log = logging.getLogger(__name__)

DEFAULT_DELIMITER = '<hr class="*"/>'
CONTEXTUALIZE_MODES = ("none", "title", "title+answer")


# ---------------------------------------------------------------- q2OD-MDS

@dataclass(frozen=True)
class QmdsInstance:
    query: str
    docs: tuple[Document, ...]
    summaries: tuple[str, ...]
    query_id: str | None = None

    def __post_init__(self):
        if not self.docs:
            raise DataError("qMDS instance has no documents")
        if not self.summaries:
            raise DataError("qMDS instance has no summaries")
        object.__setattr__(self, "docs", tuple(self.docs))
        object.__setattr__(self, "summaries", tuple(self.summaries))


def default_query_id(i: int) -> str:
    return f"q{i + 1:04d}"


def q2odmds_transform(instances: Sequence[QmdsInstance],
                      tokenizer: TokenizerConfig | None = None) -> tuple[Corpus, list[QueryInstance]]:
    """Pool every instance's documents into one corpus and keep the query/summary pairs.

    Documents are deduplicated by id in first-seen order; a repeated id must
    carry identical text.
    """
    if not instances:
        raise DataError("no qMDS instances to transform")
    docs: dict[str, Document] = {}
    queries = []
    for i, inst in enumerate(instances):
        gold = []
        for d in inst.docs:
            seen = docs.get(d.doc_id)
            if seen is None:
                docs[d.doc_id] = d
            elif seen.text != d.text:
                raise DataError(f"doc_id {d.doc_id!r} appears with two different texts")
            if d.doc_id not in gold:
                gold.append(d.doc_id)
        queries.append(QueryInstance(inst.query_id or default_query_id(i), inst.query, tuple(gold), inst.summaries))
    if tokenizer is None:
        return Corpus(tuple(docs.values())), queries
    pooled = tuple(make_document(d.doc_id, d.text, d.title, tokenizer) for d in docs.values())
    return Corpus(pooled, tokenizer), queries


# ---------------------------------------------------------------- stories

class _TextExtractor(HTMLParser):
    _BLOCK = {"p", "br", "div", "h1", "h2", "h3", "h4", "h5", "h6", "li", "tr", "blockquote", "pre"}

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.parts: list[str] = []
        self._skip = 0

    def handle_starttag(self, tag, attrs):
        if tag in ("script", "style", "head"):
            self._skip += 1
        elif tag in self._BLOCK:
            self.parts.append("\n")

    def handle_endtag(self, tag):
        if tag in ("script", "style", "head"):
            self._skip = max(0, self._skip - 1)
        elif tag in self._BLOCK:
            self.parts.append("\n")

    def handle_data(self, data):
        if not self._skip:
            self.parts.append(data)


def html_to_text(fragment: str) -> str:
    parser = _TextExtractor()
    parser.feed(fragment)
    parser.close()
    text = "".join(parser.parts)
    text = re.sub(r"[ \t\r\f\v]+", " ", text)
    text = re.sub(r" *\n[ \n]*", "\n\n", text)
    return text.strip()


def html_title(page: str) -> str | None:
    m = re.search(r"<title[^>]*>(.*?)</title>", page, flags=re.IGNORECASE | re.DOTALL)
    if not m:
        return None
    title = html_lib.unescape(re.sub(r"\s+", " ", m.group(1))).strip()
    return title or None


def compile_delimiter(pattern: str) -> re.Pattern:
    """Literal pattern where ``*`` matches any run of characters inside one tag."""
    body = "[^>]*?".join(re.escape(part) for part in pattern.split("*"))
    return re.compile(body, flags=re.IGNORECASE)


def split_story(html: str, delimiter_pattern: str = DEFAULT_DELIMITER, story_id: str = "story",
                title: str | None = None, tokenizer: TokenizerConfig | None = None) -> list[Document]:
    """Split a story page into chapter documents ``<story_id>-c<n>`` (n from 1)."""
    segments = compile_delimiter(delimiter_pattern).split(html)
    if len(segments) == 1:
        log.warning("story %s: no chapter delimiter found; keeping it as one chapter", story_id)
    texts = [t for t in (html_to_text(s) for s in segments) if t]
    if not texts:
        raise DataError(f"story {story_id!r} has no text")
    cfg = tokenizer or TokenizerConfig()
    return [make_document(f"{story_id}-c{i}", t, title, cfg) for i, t in enumerate(texts, start=1)]


def _strip_quotes(text: str) -> str:
    text = text.strip()
    pairs = {'"': '"', "'": "'", "“": "”", "‘": "’", "`": "`"}
    while len(text) >= 2 and text[0] in pairs and text[-1] == pairs[text[0]]:
        text = text[1:-1].strip()
    return text


def contextualize_query(query: str, title: str, answer: str | None, llm: LlmClient,
                        templates: Mapping[str, PromptTemplate] | None = None) -> str:
    """Ask the LLM to rewrite ``query`` so it names its story (and, optionally, uses one answer)."""
    if not query.strip():
        raise DataError("cannot contextualize an empty query")
    tpl = (templates or default_templates())["contextualize"]
    answer_section = f"ANSWER:{answer} " if answer else ""
    req = render_prompt(tpl, query=query, title=title, answer_section=answer_section,
                        max_output_tokens=128, tag="contextualize")
    out = _strip_quotes(llm_complete(req, llm).text)
    if not out:
        log.warning("contextualize: empty rewrite for %r; keeping the original query", query)
        return query
    return out


# ---------------------------------------------------------------- clustering

@dataclass
class QueryCluster:
    cluster_id: str
    members: list[tuple[str, np.ndarray]]
    threshold_used: float
    flags: list[str] = field(default_factory=list)

    @property
    def leader(self) -> tuple[str, np.ndarray]:
        return self.members[0]

    @property
    def member_ids(self) -> list[str]:
        return [qid for qid, _ in self.members]

    def __len__(self) -> int:
        return len(self.members)


@dataclass(frozen=True)
class ClusterBounds:
    min_size: int = 2
    max_size: int = 6
    theta_step: float = 0.05  # added to the threshold per split round; negative loosens
    theta_cap: float = 0.99

    def __post_init__(self):
        if not 1 <= self.min_size <= self.max_size:
            raise DataError(f"cluster bounds need 1 <= min_size <= max_size (got {self.min_size}, {self.max_size})")
        if self.theta_step == 0:
            raise DataError("theta_step must be non-zero")


def _leader_cluster(members: Sequence[tuple[str, np.ndarray]], theta: float, id_prefix: str) -> list[QueryCluster]:
    clusters: list[QueryCluster] = []
    for qid, vec in members:
        for c in clusters:
            if float(c.leader[1] @ vec) > theta:
                c.members.append((qid, vec))
                break
        else:
            clusters.append(QueryCluster(f"{id_prefix}{len(clusters):04d}", [(qid, vec)], theta))
    return clusters


def cluster_queries(queries: Sequence[tuple[str, str]], embedder: Embedder, theta: float = 0.8) -> list[QueryCluster]:
    """Single-pass leader clustering.

    Queries are scanned in input order. Each joins the first cluster whose
    leader's cosine similarity exceeds ``theta``, or else leads a new cluster.
    """
    if not queries:
        raise DataError("no queries to cluster")
    if not 0 < theta < 1:
        raise DataError("theta must lie in (0, 1)")
    members = [(qid, embed_text(text, embedder)) for qid, text in queries]
    return _leader_cluster(members, theta, "k")


def _split_oversized(cluster: QueryCluster, bounds: ClusterBounds) -> list[QueryCluster]:
    theta = cluster.threshold_used
    parts = [cluster]
    while any(len(p) > bounds.max_size for p in parts):
        nxt = theta + bounds.theta_step
        if (bounds.theta_step > 0 and nxt > bounds.theta_cap) or (bounds.theta_step < 0 and nxt <= 0):
            break
        theta = nxt
        new_parts = []
        for p in parts:
            if len(p) > bounds.max_size:
                new_parts.extend(_leader_cluster(p.members, theta, f"{p.cluster_id}."))
            else:
                new_parts.append(p)
        parts = new_parts
    for p in parts:
        if len(p) > bounds.max_size:
            p.flags.append(f"oversized: {len(p)} > {bounds.max_size} after threshold reached {theta:.2f}")
    return parts


def resize_clusters(clusters: Sequence[QueryCluster], bounds: ClusterBounds = ClusterBounds()) -> list[QueryCluster]:
    """Bring cluster sizes into ``[min_size, max_size]``.

    Oversized clusters are re-clustered at a threshold moved by ``theta_step``
    per round until every part fits or the threshold hits its cap. Undersized
    clusters are then merged, one at a time, into the other cluster whose
    leader is most similar to theirs (ties by cluster_id). Targets that would
    overflow ``max_size`` are avoided unless no other target exists. Sizes
    still out of bounds at the end are recorded in ``flags``.
    """
    out: list[QueryCluster] = []
    for c in clusters:
        c = QueryCluster(c.cluster_id, list(c.members), c.threshold_used, list(c.flags))
        out.extend(_split_oversized(c, bounds) if len(c) > bounds.max_size else [c])

    while len(out) > 1:
        small = next((c for c in out if len(c) < bounds.min_size), None)
        if small is None:
            break
        others = [c for c in out if c is not small]
        fitting = [c for c in others if len(c) + len(small) <= bounds.max_size]
        pool = sorted(fitting or others, key=lambda c: c.cluster_id)
        lead = small.leader[1]
        target = max(pool, key=lambda c: float(c.leader[1] @ lead))  # first max wins ties
        target.members.extend(small.members)
        target.flags.extend(small.flags)
        out.remove(small)

    for c in out:
        if len(c) > bounds.max_size and not any(f.startswith("oversized") for f in c.flags):
            c.flags.append(f"oversized: {len(c)} > {bounds.max_size} after merging")
        if len(c) < bounds.min_size:
            c.flags.append(f"undersized: {len(c)} < {bounds.min_size} (no other cluster to merge into)")
    return out


# ---------------------------------------------------------------- merging

@dataclass(frozen=True)
class MergedPair:
    merged_query: str
    merged_summary: str
    source_query_ids: tuple[str, ...]
    source_doc_ids: tuple[str, ...]
    used_fallback: bool = False


def _fallback_merge(queries: list[str], summaries: list[str]) -> tuple[str, str]:
    return " Also, ".join(queries), "\n\n".join(summaries)


def merge_cluster(cluster: QueryCluster, query_texts: Mapping[str, str], summary_texts: Mapping[str, str],
                  gold_doc_ids: Mapping[str, Sequence[str]], llm: LlmClient | None = None,
                  templates: Mapping[str, PromptTemplate] | None = None) -> MergedPair:
    """Combine a cluster's queries and summaries into one pair.

    Without an LLM, or if the LLM fails, queries are joined with " Also, " and
    summaries with blank lines.
    """
    ids = cluster.member_ids
    if not ids:
        raise DataError("cannot merge an empty cluster")
    queries = [query_texts[q] for q in ids]
    summaries = [summary_texts[q] for q in ids]
    docs: list[str] = []
    for q in ids:
        for d in gold_doc_ids[q]:
            if d not in docs:
                docs.append(d)
    if len(ids) == 1:
        return MergedPair(queries[0], summaries[0], tuple(ids), tuple(docs))
    if llm is not None:
        tpls = templates or default_templates()
        try:
            q_req = render_prompt(tpls["merge_query"], queries="\n".join(f"- {q}" for q in queries),
                                  max_output_tokens=256, tag="merge_query")
            s_req = render_prompt(tpls["merge_summary"], summaries="\n\n".join(summaries),
                                  max_output_tokens=1024, tag="merge_summary")
            mq = _strip_quotes(llm_complete(q_req, llm).text)
            ms = llm_complete(s_req, llm).text.strip()
            if mq and ms:
                return MergedPair(mq, ms, tuple(ids), tuple(docs))
            log.warning("cluster %s: empty LLM merge; using concatenation", cluster.cluster_id)
        except ProviderError as exc:
            log.warning("cluster %s: LLM merge failed (%s); using concatenation", cluster.cluster_id, exc)
    mq, ms = _fallback_merge(queries, summaries)
    return MergedPair(mq, ms, tuple(ids), tuple(docs), used_fallback=llm is not None)


# ---------------------------------------------------------------- pipelines

@dataclass
class BuildReport:
    mode: str
    n_input_queries: int = 0
    n_output_queries: int = 0
    n_documents: int = 0
    theta: float | None = None
    theta_step: float | None = None
    thresholds_used: list[float] = field(default_factory=list)
    cluster_sizes: dict[int, int] = field(default_factory=dict)
    fallback_merges: int = 0
    flagged: list[dict] = field(default_factory=list)
    contextualize: str = "none"

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "n_input_queries": self.n_input_queries,
            "n_output_queries": self.n_output_queries,
            "n_documents": self.n_documents,
            "theta": self.theta,
            "theta_step": self.theta_step,
            "thresholds_used": self.thresholds_used,
            "cluster_size_histogram": {str(k): v for k, v in sorted(self.cluster_sizes.items())},
            "fallback_merges": self.fallback_merges,
            "flagged": self.flagged,
            "contextualize": self.contextualize,
        }


def build_meeting_dataset(instances: Sequence[QmdsInstance], embedder: Embedder, *, theta: float = 0.8,
                          bounds: ClusterBounds = ClusterBounds(), llm: LlmClient | None = None,
                          templates: Mapping[str, PromptTemplate] | None = None,
                          tokenizer: TokenizerConfig | None = None,
                          ) -> tuple[Corpus, list[QueryInstance], BuildReport]:
    """Cluster similar queries across meetings and merge each cluster into one pair.

    Only the first summary of each input instance takes part in merging.
    """
    corpus, originals = q2odmds_transform(instances, tokenizer)
    clusters = cluster_queries([(q.query_id, q.query) for q in originals], embedder, theta)
    clusters = resize_clusters(clusters, bounds)
    texts = {q.query_id: q.query for q in originals}
    sums = {q.query_id: q.references[0] for q in originals}
    golds = {q.query_id: q.gold_doc_ids for q in originals}

    report = BuildReport("meeting", len(originals), theta=theta, theta_step=bounds.theta_step)
    report.thresholds_used = sorted({c.threshold_used for c in clusters})
    merged = []
    for i, c in enumerate(clusters):
        pair = merge_cluster(c, texts, sums, golds, llm, templates)
        report.fallback_merges += pair.used_fallback
        qid = f"m{i + 1:04d}"
        merged.append(QueryInstance(qid, pair.merged_query, pair.source_doc_ids, (pair.merged_summary,)))
        if c.flags:
            report.flagged.append({"query_id": qid, "cluster_id": c.cluster_id, "size": len(c), "flags": c.flags})
    report.cluster_sizes = dict(Counter(len(c) for c in clusters))
    report.n_output_queries = len(merged)
    report.n_documents = len(corpus)
    return corpus, merged, report


@dataclass(frozen=True)
class StoryQuery:
    query: str
    story_id: str
    summaries: tuple[str, ...]
    query_id: str | None = None


def build_story_dataset(stories: Mapping[str, str], queries: Sequence[StoryQuery], *,
                        delimiter_pattern: str = DEFAULT_DELIMITER, contextualize: str = "none",
                        llm: LlmClient | None = None, templates: Mapping[str, PromptTemplate] | None = None,
                        tokenizer: TokenizerConfig | None = None,
                        ) -> tuple[Corpus, list[QueryInstance], BuildReport]:
    """Split each story into chapters; every chapter of a query's story is gold.

    ``stories`` maps story id to raw HTML. With ``contextualize`` set to
    ``title`` or ``title+answer`` each query is rewritten by ``llm``.
    """
    if contextualize not in CONTEXTUALIZE_MODES:
        raise DataError(f"contextualize must be one of {CONTEXTUALIZE_MODES}")
    if contextualize != "none" and llm is None:
        raise DataError("query contextualization needs an LLM")
    chapters: dict[str, list[Document]] = {}
    titles: dict[str, str] = {}
    for sid, page in stories.items():
        titles[sid] = html_title(page) or sid
        chapters[sid] = split_story(page, delimiter_pattern, sid, titles[sid], tokenizer)
    instances = []
    for q in queries:
        if q.story_id not in chapters:
            raise DataError(f"query refers to unknown story {q.story_id!r}")
        text = q.query
        if contextualize != "none":
            answer = q.summaries[0] if contextualize == "title+answer" else None
            text = contextualize_query(q.query, titles[q.story_id], answer, llm, templates)
        instances.append(QmdsInstance(text, tuple(chapters[q.story_id]), q.summaries, q.query_id))
    corpus, out = q2odmds_transform(instances, tokenizer)
    report = BuildReport("story", len(queries), len(out), len(corpus), contextualize=contextualize)
    return corpus, out, report
