"""HTTP backends.

Native wire protocol (one model server, three POST routes):

* ``{base}/v1/next_logprobs``  body ``{"tokens": [int, ...], "top": int | "full"}``
  response ``{"logprobs": [{"id": int, "logprob": float}, ...], "vocab_size": int}``
* ``{base}/v1/tokenize``      body ``{"text": str}``    response ``{"tokens": [int, ...]}``
* ``{base}/v1/detokenize``    body ``{"tokens": [...]}`` response ``{"text": str}``

When the server returns only the top entries, the residual probability mass
is spread uniformly over the ids it did not return, so the completed
distribution sums to one.
"""

from __future__ import annotations

import math
import threading
import time
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import requests

from ..dist import TokenDistribution
from ..errors import BackendError
from .base import BackendRequest

_BACKOFF_S = (0.1, 0.2, 0.4)


@dataclass(frozen=True)
class BackendEndpoint:
    """Where and how to talk to a model server."""

    base_url: str
    timeout_s: float = 30.0
    max_parallel: int = 4
    top: int | str = "full"  # how many logprob entries to request
    retries: int = 3  # transport retries after the first attempt

    def __post_init__(self):
        if isinstance(self.top, str) and self.top != "full":
            raise ValueError("top must be an integer or 'full'")
        if self.max_parallel < 1:
            raise ValueError("max_parallel must be >= 1")


def complete_distribution(entries: Sequence[tuple[int, float]], vocab_size: int) -> TokenDistribution:
    """Turn (token id, logprob) pairs into a full distribution.

    Residual mass 1 - sum(exp(logprob)) is spread uniformly over ids that
    did not appear. A completed vector whose total strays from 1 by more
    than 1e-6 means the server reported inconsistent logprobs.
    """
    probs = np.zeros(vocab_size, dtype=np.float64)
    seen = np.zeros(vocab_size, dtype=bool)
    for token_id, logprob in entries:
        if not 0 <= token_id < vocab_size:
            raise BackendError(f"server returned token id {token_id} outside vocab {vocab_size}")
        probs[token_id] = math.exp(logprob)
        seen[token_id] = True
    residual = 1.0 - float(probs.sum())
    missing = int(vocab_size - seen.sum())
    if missing > 0 and residual > 0.0:
        probs[~seen] = residual / missing
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-6:
        raise BackendError(f"completed distribution sums to {total!r}, server logprobs inconsistent")
    return TokenDistribution.from_weights(probs)


class _HttpBase:
    truncation = "suffix"

    def __init__(self, endpoint: BackendEndpoint):
        self.endpoint = endpoint
        self.eos_token_id: int | None = None
        self._session = requests.Session()
        self._gate = threading.Semaphore(endpoint.max_parallel)
        self._vocab_size: int | None = None

    @property
    def vocab_size(self) -> int:
        if self._vocab_size is None:
            raise BackendError("vocab size unknown until the first server response")
        return self._vocab_size

    def _post(self, route: str, payload: dict) -> dict:
        url = self.endpoint.base_url.rstrip("/") + route
        last: Exception | None = None
        attempts = 0
        for attempt in range(self.endpoint.retries + 1):
            attempts += 1
            try:
                with self._gate:
                    resp = self._session.post(url, json=payload, timeout=self.endpoint.timeout_s)
                if resp.status_code >= 500:
                    raise requests.HTTPError(f"server error {resp.status_code}", response=resp)
                if resp.status_code != 200:
                    raise BackendError(
                        f"{url} returned {resp.status_code}: {resp.text[:200]}", attempts=attempts
                    )
                return resp.json()
            except (requests.RequestException, ValueError) as exc:
                last = exc
                if attempt < self.endpoint.retries:
                    time.sleep(_BACKOFF_S[min(attempt, len(_BACKOFF_S) - 1)])
        raise BackendError(f"{url} failed after {attempts} attempts: {last}", attempts=attempts, cause=last)


class HttpBackend(_HttpBase):
    """Client for the native next-logprobs protocol, including tokenize routes."""

    @property
    def tokenizer_id(self) -> str:
        return f"http:{self.endpoint.base_url}"

    def next_token_distribution(self, request: BackendRequest) -> TokenDistribution:
        body = {"tokens": list(request.tokens), "top": self.endpoint.top}
        data = self._post("/v1/next_logprobs", body)
        try:
            vocab = int(data["vocab_size"])
            entries = [(int(e["id"]), float(e["logprob"])) for e in data["logprobs"]]
        except (KeyError, TypeError) as exc:
            raise BackendError(f"malformed next_logprobs response: {exc!r}") from exc
        self._vocab_size = vocab
        if "eos_token_id" in data and data["eos_token_id"] is not None:
            self.eos_token_id = int(data["eos_token_id"])
        return complete_distribution(entries, vocab)

    def tokenize(self, text: str) -> list[int]:
        data = self._post("/v1/tokenize", {"text": text})
        return [int(t) for t in data["tokens"]]

    def detokenize(self, tokens: Sequence[int]) -> str:
        data = self._post("/v1/detokenize", {"tokens": [int(t) for t in tokens]})
        return str(data["text"])


class OpenAICompatBackend(_HttpBase):
    """Adapter for OpenAI-style completion servers that echo prompt logprobs.

    Sends a one-token completion request with ``logprobs`` and reads the top
    logprobs of the next position. The server must accept a token-id prompt
    and key ``top_logprobs`` by token id; the vocab size is not discoverable
    over this API, so it is required up front.
    """

    def __init__(self, endpoint: BackendEndpoint, model: str, vocab_size: int):
        super().__init__(endpoint)
        self.model = model
        self._vocab_size = int(vocab_size)

    def next_token_distribution(self, request: BackendRequest) -> TokenDistribution:
        top = self.endpoint.top
        body = {
            "model": self.model,
            "prompt": list(request.tokens),
            "max_tokens": 1,
            "temperature": 0,
            "logprobs": self._vocab_size if top == "full" else int(top),
            "echo": False,
        }
        data = self._post("/v1/completions", body)
        try:
            table = data["choices"][0]["logprobs"]["top_logprobs"][0]
            entries = [(int(token_id), float(lp)) for token_id, lp in table.items()]
        except (KeyError, IndexError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed completion response: {exc!r}") from exc
        return complete_distribution(entries, self._vocab_size)
