from __future__ import annotations

import os
import re
from dataclasses import dataclass
from functools import lru_cache
from importlib import resources

import yaml

from .errors import DataError
from .llm import LlmRequest

TEMPLATE_NAMES = (
    "story", "meeting", "map", "reduce", "refine_init", "refine_step",
    "merge_query", "merge_summary", "contextualize", "geval_consistency", "geval_relevance",
)
DOC_SLOTS = ("story", "meeting", "docs")
_PLACEHOLDER = re.compile(r"\{(\w+)\}")


@dataclass(frozen=True)
class PromptTemplate:
    name: str
    system_text: str
    user_text: str

    @property
    def placeholders(self) -> list[str]:
        return _PLACEHOLDER.findall(self.user_text)

    def check(self) -> None:
        slots = self.placeholders
        if self.name in ("story", "meeting"):
            doc = [s for s in slots if s in DOC_SLOTS]
            if not doc or "query" not in slots:
                raise DataError(f"template {self.name!r} needs a document slot and {{query}}")
            if slots.index("query") < slots.index(doc[0]):
                raise DataError(f"template {self.name!r} must place {{query}} after the document text")


def _parse(raw: dict, source: str) -> dict[str, PromptTemplate]:
    if not isinstance(raw, dict):
        raise DataError(f"{source}: templates file must be a mapping")
    out = {}
    for name, body in raw.items():
        if not isinstance(body, dict) or "user" not in body:
            raise DataError(f"{source}: template {name!r} needs a 'user' entry")
        tpl = PromptTemplate(name, body.get("system") or "", body["user"])
        tpl.check()
        out[name] = tpl
    return out


@lru_cache(maxsize=1)
def default_templates() -> dict[str, PromptTemplate]:
    text = resources.files("odmds").joinpath("data/templates.yaml").read_text(encoding="utf-8")
    return _parse(yaml.safe_load(text), "built-in templates")


def load_templates(path: str | os.PathLike | None = None) -> dict[str, PromptTemplate]:
    """Built-in templates, overridden by any entries in the YAML file at ``path``."""
    templates = dict(default_templates())
    if path is not None:
        try:
            with open(path, encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except FileNotFoundError:
            raise DataError(f"{path}: templates file not found") from None
        templates.update(_parse(raw, str(path)))
    return templates


def render_prompt(template: PromptTemplate, docs_text: str | None = None, query: str | None = None,
                  *, max_output_tokens: int = 512, temperature: float = 0.0, tag: str = "",
                  **fields: str) -> LlmRequest:
    """Fill ``template``'s placeholders by exact substitution.

    ``docs_text`` fills whichever of ``{story}``, ``{meeting}`` or ``{docs}``
    the template uses. Substituted values are not re-scanned, so braces in
    document text are safe.
    """
    values = dict(fields)
    if docs_text is not None:
        for slot in DOC_SLOTS:
            values.setdefault(slot, docs_text)
    if query is not None:
        values["query"] = query
    missing = [p for p in template.placeholders if p not in values]
    if missing:
        raise DataError(f"template {template.name!r}: no value for placeholder(s) {missing}")
    user = _PLACEHOLDER.sub(lambda m: values[m.group(1)], template.user_text)
    return LlmRequest(template.system_text, user, max_output_tokens, temperature, tag or template.name)
