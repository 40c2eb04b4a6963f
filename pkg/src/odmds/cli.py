"""``odmds`` command line: build-dataset, index, retrieve, eval-retrieval,
summarize, eval-summaries, report.

Exit codes: 0 success, 1 usage error, 2 data error, 3 provider/transport error.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Sequence

from ._io import atomic_write_text, read_json, read_jsonl, write_json, write_jsonl
from .config import PipelineConfig, load_config
from .corpus import load_corpus, load_queries, write_corpus, write_queries
from .dataset_builder import (
    CONTEXTUALIZE_MODES,
    DEFAULT_DELIMITER,
    ClusterBounds,
    QmdsInstance,
    StoryQuery,
    build_meeting_dataset,
    build_story_dataset,
    q2odmds_transform,
)
from .errors import DataError, OdmdsError, UsageError
from .llm import make_llm
from .prompts import load_templates
from .retrieval import (
    RetrievalRun,
    build_dense_index,
    build_sparse_index,
    load_dense_index,
    load_sparse_index,
    make_embedder,
    read_run,
    save_dense_index,
    save_sparse_index,
    search_dense,
    search_sparse,
    write_run,
)
from .retrieval_eval import derive_topk, evaluate_run, format_retrieval_table
from .summ_eval import evaluate_summaries, format_summary_table
from .summarization import ORDERS, STRATEGIES, StrategyConfig, SummaryRecord, summarize

log = logging.getLogger("odmds")

RETRIEVERS = ("bm25", "dense")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _need(path: Path | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"no path configured for {what}")
    if not path.exists():
        raise DataError(f"missing {what}: expected {path}")
    return path


def _out(arg: str | None, default: Path | None, what: str) -> Path:
    if arg:
        return Path(arg)
    if default is None:
        raise UsageError(f"no output path for {what}; pass it explicitly")
    return default


def _default_index_path(cfg: PipelineConfig, retriever: str) -> Path:
    return cfg.path("indexes") / ("bm25.json" if retriever == "bm25" else "dense.jsonl")


# ------------------------------------------------------------------ commands

def cmd_build_dataset(cfg: PipelineConfig, args) -> int:
    templates = load_templates(cfg.path("templates"))
    out_corpus = _out(args.out_corpus, cfg.path("corpus"), "corpus")
    out_queries = _out(args.out_queries, cfg.path("queries"), "queries")
    report_path = _out(args.report, cfg.path("reports") / "build_report.json", "build report")
    llm = make_llm(cfg.llm)
    input_path = _need(Path(args.input), "qMDS input")
    rows = list(read_jsonl(input_path))

    if args.mode == "story":
        stories_dir = _need(Path(args.stories_dir) if args.stories_dir else None, "stories directory")
        stories = {p.stem: p.read_text(encoding="utf-8") for p in sorted(stories_dir.glob("*.htm*"))}
        queries = []
        for lineno, obj in rows:
            ids = obj.get("doc_ids") or [obj.get("story_id")]
            if len(ids) != 1 or not ids[0]:
                raise DataError(f"{input_path}:{lineno}: story queries need exactly one story id")
            queries.append(StoryQuery(obj["query"], ids[0], tuple(obj["summaries"]), obj.get("query_id")))
        corpus, out, report = build_story_dataset(
            stories, queries, delimiter_pattern=args.delimiter, contextualize=args.contextualize,
            llm=llm, templates=templates, tokenizer=cfg.tokenizer,
        )
    else:
        source = load_corpus(_need(Path(args.corpus_in) if args.corpus_in else None, "source corpus"), cfg.tokenizer)
        instances = []
        for lineno, obj in rows:
            try:
                docs = tuple(source[d] for d in obj["doc_ids"])
                instances.append(QmdsInstance(obj["query"], docs, tuple(obj["summaries"]), obj.get("query_id")))
            except KeyError as exc:
                raise DataError(f"{input_path}:{lineno}: missing field {exc.args[0]!r}") from None
            except DataError as exc:
                raise DataError(f"{input_path}:{lineno}: {exc}") from None
        if args.mode == "meeting":
            bounds = ClusterBounds(args.min_size, args.max_size, args.theta_step)
            embedder = make_embedder(cfg.embedding, cfg.tokenizer)
            corpus, out, report = build_meeting_dataset(
                instances, embedder, theta=args.theta, bounds=bounds, llm=llm,
                templates=templates, tokenizer=cfg.tokenizer,
            )
        else:
            corpus, out = q2odmds_transform(instances, cfg.tokenizer)
            report = None
    write_corpus(corpus, out_corpus)
    write_queries(out, out_queries)
    if report is not None:
        write_json(report_path, report.to_json())
    else:
        write_json(report_path, {"mode": "qmds", "n_input_queries": len(out),
                                 "n_output_queries": len(out), "n_documents": len(corpus)})
    log.info("wrote %d documents and %d queries", len(corpus), len(out))
    return 0


def cmd_index(cfg: PipelineConfig, args) -> int:
    corpus = load_corpus(_need(cfg.path("corpus"), "corpus"), cfg.tokenizer)
    out = _out(args.out, _default_index_path(cfg, args.retriever), "index")
    if args.retriever == "bm25":
        save_sparse_index(build_sparse_index(corpus), out)
    else:
        emb = make_embedder(cfg.embedding, cfg.tokenizer)
        save_dense_index(build_dense_index(corpus, emb, cfg.max_concurrency), out)
    log.info("indexed %d documents into %s", len(corpus), out)
    return 0


def cmd_retrieve(cfg: PipelineConfig, args) -> int:
    queries = load_queries(_need(cfg.path("queries"), "queries"))
    index_path = _need(Path(args.index) if args.index else _default_index_path(cfg, args.retriever),
                       f"{args.retriever} index")
    meta = {"dataset": cfg.dataset}
    if args.k is not None:
        k = args.k
        meta["strategy"] = ""
    else:
        strategy = args.strategy or cfg.topk
        k = derive_topk(queries)[strategy].k
        meta["strategy"] = strategy
    if args.retriever == "bm25":
        index = load_sparse_index(index_path, cfg.tokenizer)
        results = {q.query_id: search_sparse(index, q.query, k, cfg.k1, cfg.b) for q in queries}
        tag = "bm25"
    else:
        index = load_dense_index(index_path)
        emb = make_embedder(cfg.embedding, cfg.tokenizer)
        results = {q.query_id: search_dense(index, q.query, emb, k) for q in queries}
        tag = "dense-" + index.provider_tag.replace("/", "-")
    run = RetrievalRun(tag, k, results, {key: v for key, v in meta.items() if v})
    label = meta["strategy"] or f"k{k}"
    out = _out(args.out, cfg.path("runs") / f"{args.retriever}-{label}.trec", "run")
    write_run(run, out)
    log.info("retrieved top-%d for %d queries -> %s", k, len(queries), out)
    return 0


def cmd_eval_retrieval(cfg: PipelineConfig, args) -> int:
    queries = load_queries(_need(cfg.path("queries"), "queries"))
    run_path = _need(Path(args.run), "run file")
    run = read_run(run_path)
    gold = {q.query_id: list(q.gold_doc_ids) for q in queries}
    report = evaluate_run(run, gold, args.k, dataset=cfg.dataset)
    out = _out(args.out, cfg.path("reports") / f"retrieval-{run_path.stem}.json", "report")
    write_json(out, report.to_json())
    sys.stdout.write(format_retrieval_table([report]))
    return 0


def _strategy_config(cfg: PipelineConfig, args) -> StrategyConfig:
    s = dict(cfg.summarization)
    for key in ("strategy", "order", "context_budget", "chunk_budget", "overlap", "max_output_tokens", "template"):
        val = getattr(args, key)
        if val is not None:
            s[key] = val
    if s.get("strategy", "truncate_all") != "refine":
        s.pop("order", None)
    s.setdefault("max_concurrency", 1)
    try:
        return StrategyConfig(tokenizer=cfg.tokenizer, **s)
    except TypeError as exc:
        raise DataError(f"invalid summarization config: {exc}") from exc


def cmd_summarize(cfg: PipelineConfig, args) -> int:
    corpus = load_corpus(_need(cfg.path("corpus"), "corpus"), cfg.tokenizer)
    queries = load_queries(_need(cfg.path("queries"), "queries"), corpus)
    scfg = _strategy_config(cfg, args)
    llm = make_llm(cfg.llm)
    if llm is None:
        raise UsageError("summarize needs an `llm` section in the config")
    templates = load_templates(cfg.path("templates"))
    if args.oracle:
        run = None
        retriever = "oracle"
    else:
        if not args.run:
            raise UsageError("summarize needs --run or --oracle")
        run = read_run(_need(Path(args.run), "run file"))
        retriever = run.retriever_tag
    records = []
    for q in sorted(queries, key=lambda q: q.query_id):
        ids = list(q.gold_doc_ids) if run is None else run.ranked_ids(q.query_id)
        if not ids:
            log.warning("query %s: nothing retrieved; skipped", q.query_id)
            continue
        docs = [corpus[d] for d in ids]
        records.append(summarize(docs, q.query, scfg, llm, templates, query_id=q.query_id, retriever_tag=retriever))
    default = cfg.path("summaries") / f"{scfg.label}-{retriever}.jsonl"
    out = _out(args.out, default, "summaries")
    write_jsonl(out, [r.to_json() for r in records])
    log.info("wrote %d summaries -> %s", len(records), out)
    return 0


def cmd_eval_summaries(cfg: PipelineConfig, args) -> int:
    queries = load_queries(_need(cfg.path("queries"), "queries"))
    records = []
    for p in args.summaries:
        records.extend(SummaryRecord.from_json(obj) for _, obj in read_jsonl(_need(Path(p), "summaries file")))
    judge = None if args.no_judge else make_llm(cfg.judge)
    report = evaluate_summaries(records, queries, judge, cfg.tokenizer, load_templates(cfg.path("templates")))
    out = _out(args.out, cfg.path("reports") / "summaries.json", "report")
    write_json(out, report.to_json())
    sys.stdout.write(format_summary_table(report.rows))
    return 0


def cmd_report(cfg: PipelineConfig, args) -> int:
    parts = []
    if args.retrieval:
        reps = [read_json(_need(Path(p), "retrieval report")) for p in args.retrieval]
        parts.append("Retrieval\n\n" + format_retrieval_table(reps))
    if args.summaries:
        rows = []
        for p in args.summaries:
            rows.extend(read_json(_need(Path(p), "summary report"))["rows"])
        parts.append("Summarization\n\n" + format_summary_table(rows))
    if not parts:
        raise UsageError("report needs --retrieval and/or --summaries")
    text = "\n".join(parts)
    if args.out:
        atomic_write_text(args.out, text)
    else:
        sys.stdout.write(text)
    return 0


# ------------------------------------------------------------------ parser

def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="odmds", description="Open-domain multi-document summarization pipeline.")
    parser.add_argument("--config", help="pipeline config file (YAML or JSON)")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("build-dataset", help="turn qMDS data into an open-domain dataset")
    p.add_argument("--mode", choices=("story", "meeting", "qmds"), required=True)
    p.add_argument("--input", required=True, help="qMDS JSONL: {query, doc_ids, summaries}")
    p.add_argument("--corpus-in", help="shared corpus JSONL referenced by doc_ids (meeting/qmds)")
    p.add_argument("--stories-dir", help="directory of story HTML files, id = filename stem (story)")
    p.add_argument("--delimiter", default=DEFAULT_DELIMITER, help="chapter delimiter, '*' is a wildcard")
    p.add_argument("--theta", type=float, default=0.8, help="query clustering threshold")
    p.add_argument("--theta-step", type=float, default=0.05, help="threshold change per split round")
    p.add_argument("--min-size", type=int, default=2)
    p.add_argument("--max-size", type=int, default=6)
    p.add_argument("--contextualize", choices=CONTEXTUALIZE_MODES, default="none")
    p.add_argument("--out-corpus")
    p.add_argument("--out-queries")
    p.add_argument("--report")
    p.set_defaults(func=cmd_build_dataset)

    p = sub.add_parser("index", help="build a sparse or dense index over the corpus")
    p.add_argument("--retriever", choices=RETRIEVERS, default="bm25")
    p.add_argument("--out")
    p.set_defaults(func=cmd_index)

    p = sub.add_parser("retrieve", help="write a TREC run for every query")
    p.add_argument("--retriever", choices=RETRIEVERS, default="bm25")
    p.add_argument("--index")
    group = p.add_mutually_exclusive_group()
    group.add_argument("--strategy", choices=("min", "mean", "max"), help="top-k from gold-count statistics")
    group.add_argument("--k", type=int, help="explicit cutoff")
    p.add_argument("--out")
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("eval-retrieval", help="P@K, R@K, NDCG and MAP of a run")
    p.add_argument("--run", required=True)
    p.add_argument("--k", type=int, help="cutoff (default: the run's k)")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_retrieval)

    p = sub.add_parser("summarize", help="summarize retrieved (or gold) documents per query")
    src = p.add_mutually_exclusive_group()
    src.add_argument("--run")
    src.add_argument("--oracle", action="store_true", help="use gold documents instead of a run")
    p.add_argument("--strategy", choices=STRATEGIES)
    p.add_argument("--order", choices=ORDERS, help="refine document order")
    p.add_argument("--context-budget", type=int)
    p.add_argument("--chunk-budget", type=int)
    p.add_argument("--overlap", type=int)
    p.add_argument("--max-output-tokens", type=int)
    p.add_argument("--template", choices=("story", "meeting"))
    p.add_argument("--out")
    p.set_defaults(func=cmd_summarize)

    p = sub.add_parser("eval-summaries", help="ROUGE and optional G-EVAL over summaries")
    p.add_argument("--summaries", nargs="+", required=True)
    p.add_argument("--no-judge", action="store_true", help="skip G-EVAL even if a judge is configured")
    p.add_argument("--out")
    p.set_defaults(func=cmd_eval_summaries)

    p = sub.add_parser("report", help="render text tables from report JSONs")
    p.add_argument("--retrieval", nargs="*", default=[])
    p.add_argument("--summaries", nargs="*", default=[])
    p.add_argument("--out")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return args.func(cfg, args)
    except OdmdsError as exc:
        print(f"odmds {args.command}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
