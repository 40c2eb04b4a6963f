"""Runs the full command sequence over a copy of the bundled fixture."""
from pathlib import Path

from odmds.cli import main
from odmds.fixtures import copy_fixture


def run_fixture_pipeline(workdir):
    """Return ``(config_path, {command label: exit code})``."""
    cfg = copy_fixture(workdir)
    out = Path(workdir) / "out"
    steps = {
        "index-bm25": ["index", "--retriever", "bm25"],
        "index-dense": ["index", "--retriever", "dense"],
        "retrieve-bm25": ["retrieve", "--retriever", "bm25", "--strategy", "mean"],
        "retrieve-dense": ["retrieve", "--retriever", "dense", "--strategy", "max"],
        "eval-bm25": ["eval-retrieval", "--run", str(out / "runs" / "bm25-mean.trec")],
        "eval-dense": ["eval-retrieval", "--run", str(out / "runs" / "dense-max.trec")],
        "sum-truncate": ["summarize", "--run", str(out / "runs" / "bm25-mean.trec"), "--strategy", "truncate_all"],
        "sum-mapreduce": ["summarize", "--run", str(out / "runs" / "dense-max.trec"), "--strategy", "map_reduce",
                          "--context-budget", "30"],
        "sum-refine": ["summarize", "--oracle", "--strategy", "refine", "--order", "high_to_low"],
        "eval-summaries": ["eval-summaries", "--summaries",
                           str(out / "summaries" / "truncate_all-bm25.jsonl"),
                           str(out / "summaries" / "refine_high_to_low-oracle.jsonl")],
        "report": ["report", "--retrieval", str(out / "reports" / "retrieval-bm25-mean.json"),
                   str(out / "reports" / "retrieval-dense-max.json"),
                   "--summaries", str(out / "reports" / "summaries.json"),
                   "--out", str(out / "reports" / "tables.txt")],
    }
    codes = {}
    for label, argv in steps.items():
        codes[label] = main(["--config", str(cfg), *argv])
    return cfg, codes


def output_files(workdir):
    root = Path(workdir) / "out"
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}
