"""LLM client contract: a remote chat-completions client plus test doubles."""
from __future__ import annotations

import logging
import os
import re
import threading
import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Protocol, Sequence

from ._http import post_json
from .corpus import DEFAULT_TOKENIZER, TokenizerConfig, count_tokens, truncate_to_budget
from .errors import DataError, LlmError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class LlmRequest:
    system: str
    user: str
    max_output_tokens: int = 512
    temperature: float = 0.0
    tag: str = ""

    def __post_init__(self):
        if not self.user:
            raise DataError("LLM request needs non-empty user text")


@dataclass(frozen=True)
class LlmResponse:
    text: str
    input_token_estimate: int = 0
    latency_ms: float = 0.0
    provider_meta: dict = field(default_factory=dict)


class LlmClient(Protocol):
    def complete(self, req: LlmRequest) -> LlmResponse: ...


def _estimate(req: LlmRequest) -> int:
    return count_tokens(req.system) + count_tokens(req.user)


class ChatCompletionsClient:
    """POSTs ``{"model", "messages": [system, user], ...}`` to ``{base_url}/chat/completions``."""

    def __init__(self, base_url: str, model: str, *, api_key_env: str = "LLM_API_KEY",
                 retries: int = 3, backoff_base: float = 1.0, timeout: float = 300.0,
                 sleep: Callable[[float], None] | None = None):
        self.url = base_url.rstrip("/") + "/chat/completions"
        self.model = model
        self.api_key_env = api_key_env
        self.retries = retries
        self.backoff_base = backoff_base
        self.timeout = timeout
        self.sleep = sleep

    def complete(self, req: LlmRequest) -> LlmResponse:
        headers = {"Content-Type": "application/json"}
        key = os.environ.get(self.api_key_env)
        if key:
            headers["Authorization"] = f"Bearer {key}"
        messages = []
        if req.system:
            messages.append({"role": "system", "content": req.system})
        messages.append({"role": "user", "content": req.user})
        payload = {
            "model": self.model,
            "messages": messages,
            "temperature": req.temperature,
            "max_tokens": req.max_output_tokens,
        }
        t0 = time.perf_counter()
        body = post_json(self.url, payload, headers=headers, retries=self.retries,
                         backoff_base=self.backoff_base, timeout=self.timeout,
                         error_cls=LlmError, sleep=self.sleep)
        latency = (time.perf_counter() - t0) * 1000
        try:
            text = body["choices"][0]["message"]["content"]
        except (KeyError, IndexError, TypeError) as exc:
            raise LlmError(f"unexpected chat completion response: {exc}") from exc
        if not text or not text.strip():
            raise LlmError("empty completion")
        meta = {"model": body.get("model", self.model)}
        if "usage" in body:
            meta["usage"] = body["usage"]
        return LlmResponse(text, _estimate(req), latency, meta)


class ScriptedLLM:
    """Returns canned responses in order. With ``cycle=True`` the script repeats."""

    def __init__(self, responses: Iterable[str], *, cycle: bool = False):
        self.responses = list(responses)
        self.cycle = cycle
        self._i = 0
        self._lock = threading.Lock()

    def complete(self, req: LlmRequest) -> LlmResponse:
        with self._lock:
            if self._i >= len(self.responses):
                if not self.cycle or not self.responses:
                    raise LlmError("scripted LLM ran out of responses")
                self._i = 0
            text = self.responses[self._i]
            self._i += 1
        if not text.strip():
            raise LlmError("empty completion")
        return LlmResponse(text, _estimate(req), 0.0, {"mock": "scripted"})


DOC_MARKERS = ("STORY:", "MEETING:", "TEXT:", "SUMMARIES:")


class ExtractiveLLM:
    """Answers with the first ``max_output_tokens`` tokens of the prompt's document text.

    The document text is whatever lies between the last document marker
    (``STORY:``, ``MEETING:``, ``TEXT:``, ``SUMMARIES:``) and ``QUESTION:``.
    """

    def __init__(self, markers: Sequence[str] = DOC_MARKERS, tokenizer: TokenizerConfig = DEFAULT_TOKENIZER):
        self._re = re.compile("(?:" + "|".join(re.escape(m) for m in markers) + ")")
        self.tokenizer = tokenizer

    def complete(self, req: LlmRequest) -> LlmResponse:
        q = req.user.rfind("QUESTION:")
        head = req.user if q < 0 else req.user[:q]
        starts = [m.end() for m in self._re.finditer(head)]
        source = head[starts[-1]:] if starts else head
        text = truncate_to_budget(source.strip(), req.max_output_tokens, self.tokenizer).strip()
        if not text:
            raise LlmError("empty completion")
        return LlmResponse(text, _estimate(req), 0.0, {"mock": "extractive"})


class RecordingLLM:
    """Wraps another client and keeps every request it sees."""

    def __init__(self, inner: LlmClient):
        self.inner = inner
        self.requests: list[LlmRequest] = []
        self._lock = threading.Lock()

    def complete(self, req: LlmRequest) -> LlmResponse:
        with self._lock:
            self.requests.append(req)
        return self.inner.complete(req)


def llm_complete(req: LlmRequest, client: LlmClient) -> LlmResponse:
    resp = client.complete(req)
    if not resp.text or not resp.text.strip():
        raise LlmError("empty completion")
    return resp


def make_llm(config: dict | None) -> LlmClient | None:
    """Build a client from a config mapping (``kind``: remote, scripted, extractive)."""
    if not config:
        return None
    kind = config.get("kind", "remote")
    if kind == "remote":
        try:
            return ChatCompletionsClient(
                config["base_url"], config["model"],
                api_key_env=config.get("api_key_env", "LLM_API_KEY"),
                retries=config.get("retries", 3),
                timeout=config.get("timeout", 300.0),
            )
        except KeyError as exc:
            raise DataError(f"remote LLM config is missing {exc.args[0]!r}") from None
    if kind == "scripted":
        return ScriptedLLM(config.get("responses", []), cycle=config.get("cycle", True))
    if kind == "extractive":
        return ExtractiveLLM()
    raise DataError(f"unknown LLM kind {kind!r}")
