"""Pipeline configuration: one YAML (or JSON) file; secrets only via env vars.

Relative paths resolve against the config file's directory.
"""
from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml

from .corpus import TokenizerConfig
from .errors import DataError
from .retrieval.embedding import EmbeddingProviderConfig
from .retrieval.sparse import DEFAULT_B, DEFAULT_K1

PATH_KEYS = ("corpus", "queries", "indexes", "runs", "summaries", "reports", "templates")
_PATH_DEFAULTS = {
    "corpus": "corpus.jsonl",
    "queries": "queries.jsonl",
    "indexes": "indexes",
    "runs": "runs",
    "summaries": "summaries",
    "reports": "reports",
    "templates": None,
}


@dataclass
class PipelineConfig:
    root: Path = field(default_factory=Path.cwd)
    dataset: str = "dataset"
    paths: dict[str, Path | None] = field(default_factory=dict)
    tokenizer: TokenizerConfig = field(default_factory=TokenizerConfig)
    k1: float = DEFAULT_K1
    b: float = DEFAULT_B
    embedding: EmbeddingProviderConfig = field(default_factory=EmbeddingProviderConfig)
    summarization: dict[str, Any] = field(default_factory=dict)
    llm: dict[str, Any] | None = None
    judge: dict[str, Any] | None = None
    topk: str = "min"
    max_concurrency: int = 4
    seed: int = 0

    def path(self, key: str) -> Path | None:
        return self.paths.get(key)


def _resolve(root: Path, value) -> Path | None:
    if value is None:
        return None
    p = Path(os.path.expanduser(str(value)))
    return p if p.is_absolute() else root / p


def load_config(path: str | os.PathLike | None) -> PipelineConfig:
    """Read a pipeline config; ``None`` gives defaults rooted at the working directory."""
    if path is None:
        raw: dict = {}
        root = Path.cwd()
    else:
        path = Path(path)
        if not path.exists():
            raise DataError(f"{path}: config file not found")
        try:
            raw = yaml.safe_load(path.read_text(encoding="utf-8")) or {}
        except yaml.YAMLError as exc:
            raise DataError(f"{path}: invalid YAML ({exc})") from exc
        if not isinstance(raw, dict):
            raise DataError(f"{path}: config must be a mapping")
        root = path.resolve().parent

    unknown_paths = set(raw.get("paths") or {}) - set(PATH_KEYS)
    if unknown_paths:
        raise DataError(f"unknown path keys in config: {sorted(unknown_paths)}")
    merged_paths = {**_PATH_DEFAULTS, **(raw.get("paths") or {})}
    paths = {k: _resolve(root, v) for k, v in merged_paths.items()}

    seed = int(raw.get("seed", 0))
    retrieval = raw.get("retrieval") or {}
    emb = dict(retrieval.get("embedding") or {})
    emb.setdefault("seed", seed)
    try:
        return PipelineConfig(
            root=root,
            dataset=str(raw.get("dataset", "dataset")),
            paths=paths,
            tokenizer=TokenizerConfig.from_dict(raw.get("tokenizer")),
            k1=float(retrieval.get("k1", DEFAULT_K1)),
            b=float(retrieval.get("b", DEFAULT_B)),
            embedding=EmbeddingProviderConfig.from_dict(emb),
            summarization=dict(raw.get("summarization") or {}),
            llm=raw.get("llm"),
            judge=raw.get("judge"),
            topk=str(raw.get("topk", "min")),
            max_concurrency=int(raw.get("max_concurrency", 4)),
            seed=seed,
        )
    except TypeError as exc:
        raise DataError(f"invalid config: {exc}") from exc
