"""JSON-over-HTTP backends.

Scorer protocol:     POST {url}/classify  {"texts": [...]}  -> {"logits": [[...], ...]}
Generation protocol: POST {url}/generate  {"prompt": str, "max_new_tokens": int, "temperature": 0}
                     -> {"text": str}
"""

from __future__ import annotations

import logging
import math
from typing import Sequence

import requests

from .errors import BackendError, ClientError
from .scoring import DEFAULT_MAX_TOKENS, ClassScores

log = logging.getLogger(__name__)


def _post(url: str, payload: dict, timeout: float, retries: int, session: requests.Session, error=BackendError):
    last = None
    for attempt in range(retries + 1):
        try:
            resp = session.post(url, json=payload, timeout=timeout)
        except requests.RequestException as e:
            last = f"{type(e).__name__}: {e}"
            log.warning("POST %s failed (attempt %d): %s", url, attempt + 1, last)
            continue
        if resp.status_code != 200:
            last = f"HTTP {resp.status_code} from {url}"
            if resp.status_code < 500:
                break
            continue
        try:
            return resp.json()
        except ValueError:
            raise error(f"malformed JSON body from {url}") from None
    raise error(last or f"request to {url} failed")


class HttpScorerBackend:
    def __init__(self, url: str, max_tokens: int = DEFAULT_MAX_TOKENS, batch_size: int = 16,
                 timeout: float = 30.0, retries: int = 2, session: requests.Session | None = None):
        self.url = url.rstrip("/")
        self.max_tokens = max_tokens
        self.batch_size = batch_size
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()

    def classify(self, texts: Sequence[str]) -> list[ClassScores]:
        body = _post(f"{self.url}/classify", {"texts": list(texts)}, self.timeout, self.retries, self.session)
        logits = body.get("logits") if isinstance(body, dict) else None
        if not isinstance(logits, list) or len(logits) != len(texts):
            raise BackendError("response must carry one 'logits' row per input text")
        out = []
        for row in logits:
            if not isinstance(row, list) or not row or not all(
                isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in row
            ):
                raise BackendError(f"malformed logits row {row!r}")
            out.append(ClassScores(tuple(row)))
        return out


class HttpGenerationClient:
    def __init__(self, url: str, timeout: float = 120.0, retries: int = 2, session: requests.Session | None = None):
        self.url = url.rstrip("/")
        self.timeout = timeout
        self.retries = retries
        self.session = session or requests.Session()

    def generate(self, prompt: str, max_new_tokens: int) -> str:
        payload = {"prompt": prompt, "max_new_tokens": int(max_new_tokens), "temperature": 0}
        body = _post(f"{self.url}/generate", payload, self.timeout, self.retries, self.session, error=ClientError)
        if not isinstance(body, dict) or not isinstance(body.get("text"), str):
            raise ClientError("response must be an object with a string 'text'")
        return body["text"]
