"""Access to the bundled 12-document fixture (corpus, queries, config)."""
from __future__ import annotations

import os
import shutil
from importlib import resources
from pathlib import Path

FIXTURE_FILES = ("corpus.jsonl", "queries.jsonl", "config.yaml")


def copy_fixture(dest: str | os.PathLike) -> Path:
    """Copy the fixture into ``dest`` and return the path of its config file."""
    dest = Path(dest)
    dest.mkdir(parents=True, exist_ok=True)
    src = resources.files("odmds").joinpath("data/fixture")
    for name in FIXTURE_FILES:
        with resources.as_file(src.joinpath(name)) as p:
            shutil.copyfile(p, dest / name)
    return dest / "config.yaml"
