from __future__ import annotations

import logging
import random
import time
from typing import Any, Callable

import requests

from .errors import ProviderError

log = logging.getLogger(__name__)


def post_json(
    url: str,
    payload: dict,
    *,
    headers: dict[str, str] | None = None,
    retries: int = 3,
    backoff_base: float = 1.0,
    backoff_factor: float = 2.0,
    timeout: float = 120.0,
    error_cls: type[ProviderError] = ProviderError,
    sleep: Callable[[float], None] | None = None,
    session: requests.Session | None = None,
) -> Any:
    """POST ``payload`` and return the decoded JSON body.

    Transport errors, 429 and 5xx are retried ``retries`` times with jittered
    exponential backoff. Other non-2xx statuses fail immediately.
    """
    post = (session or requests).post
    sleep = sleep or time.sleep
    last = "no attempt made"
    for attempt in range(retries + 1):
        if attempt:
            delay = backoff_base * backoff_factor ** (attempt - 1)
            sleep(delay * (1.0 + random.random() * 0.25))
        try:
            resp = post(url, json=payload, headers=headers, timeout=timeout)
        except requests.RequestException as exc:
            last = f"transport error: {exc}"
            log.warning("POST %s failed (attempt %d): %s", url, attempt + 1, exc)
            continue
        if resp.status_code == 429 or resp.status_code >= 500:
            last = f"HTTP {resp.status_code}: {resp.text[:500]}"
            log.warning("POST %s returned %d (attempt %d)", url, resp.status_code, attempt + 1)
            continue
        if not 200 <= resp.status_code < 300:
            raise error_cls(f"POST {url} -> HTTP {resp.status_code}: {resp.text[:500]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise error_cls(f"POST {url}: response is not JSON") from exc
    raise error_cls(f"POST {url} failed after {retries + 1} attempts; last: {last}")
