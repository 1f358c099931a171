"""Deterministic in-process backends for tests, demos, and benchmarks.

Every mock is referentially transparent: the same request always yields the
bitwise-identical distribution. Each keeps a ``calls`` counter so cache and
retry behavior can be asserted against the upstream traffic.
"""

from __future__ import annotations

import threading
import time
import zlib
from typing import Mapping, Sequence

from ..dist import TokenDistribution
from ..errors import BackendError, UsageError
from .base import BackendRequest


class _CountingBackend:
    truncation = "suffix"

    def __init__(self, vocab_size: int, eos_token_id: int | None = None):
        self.vocab_size = int(vocab_size)
        self.eos_token_id = eos_token_id
        self.calls = 0
        self._lock = threading.Lock()

    def _count(self) -> None:
        with self._lock:
            self.calls += 1

    def next_token_distribution(self, request: BackendRequest) -> TokenDistribution:
        self._count()
        return self._answer(request)

    def _answer(self, request: BackendRequest) -> TokenDistribution:
        raise NotImplementedError


class ConstantBackend(_CountingBackend):
    """Returns the same distribution for every context."""

    def __init__(self, dist: TokenDistribution, eos_token_id: int | None = None):
        super().__init__(dist.vocab_size, eos_token_id)
        self._dist = dist

    def _answer(self, request: BackendRequest) -> TokenDistribution:
        return self._dist


class SwitchBackend(_CountingBackend):
    """Two-regime backend: one distribution below a context-length cutoff, another at or above."""

    def __init__(
        self,
        cutoff: int,
        below: TokenDistribution,
        at_or_above: TokenDistribution,
        eos_token_id: int | None = None,
    ):
        if below.vocab_size != at_or_above.vocab_size:
            raise UsageError("switch backend needs matching vocab sizes")
        super().__init__(below.vocab_size, eos_token_id)
        self.cutoff = int(cutoff)
        self.below = below
        self.at_or_above = at_or_above

    def _answer(self, request: BackendRequest) -> TokenDistribution:
        if len(request.tokens) >= self.cutoff:
            return self.at_or_above
        return self.below


def _planted_pair(vocab_size: int, answer_token: int, confident_prob: float):
    if vocab_size < 2:
        raise UsageError("planted backend needs vocab_size >= 2")
    if not 0.0 < confident_prob < 1.0:
        raise UsageError("confident_prob must be in (0, 1)")
    if not 0 <= answer_token < vocab_size:
        raise UsageError("answer_token outside vocab")
    rest = (1.0 - confident_prob) / (vocab_size - 1)
    probs = [rest] * vocab_size
    probs[answer_token] = confident_prob
    return TokenDistribution.uniform(vocab_size), TokenDistribution.from_weights(probs)


class PlantedDependencyBackend(SwitchBackend):
    """Uniform until the context reaches the planted dependency length.

    Once the presented context has at least ``dependency_length`` tokens the
    answer token gets ``confident_prob`` and the rest share the remainder.
    """

    def __init__(
        self,
        vocab_size: int,
        dependency_length: int,
        answer_token: int,
        confident_prob: float = 0.9,
        eos_token_id: int | None = None,
    ):
        below, above = _planted_pair(vocab_size, answer_token, confident_prob)
        super().__init__(dependency_length, below, above, eos_token_id)
        self.dependency_length = int(dependency_length)
        self.answer_token = int(answer_token)
        self.confident_prob = float(confident_prob)


class PlantedLastTokenBackend(_CountingBackend):
    """Planted dependency whose length is carried by the sequence itself.

    The final token id (which survives any suffix truncation) is read as the
    dependency length, so one backend can serve a corpus with per-sequence
    dependency lengths.
    """

    def __init__(
        self,
        vocab_size: int,
        answer_token: int,
        confident_prob: float = 0.9,
        eos_token_id: int | None = None,
    ):
        super().__init__(vocab_size, eos_token_id)
        self.answer_token = int(answer_token)
        self.confident_prob = float(confident_prob)
        self._below, self._above = _planted_pair(vocab_size, answer_token, confident_prob)

    def _answer(self, request: BackendRequest) -> TokenDistribution:
        if not request.tokens:
            return self._below
        depth = max(1, int(request.tokens[-1]))
        if len(request.tokens) >= depth:
            return self._above
        return self._below


class NgramBackend(_CountingBackend):
    """Table lookup on the last ``order`` tokens; uniform when the key is absent."""

    def __init__(
        self,
        vocab_size: int,
        order: int,
        table: Mapping[tuple[int, ...], TokenDistribution],
        eos_token_id: int | None = None,
    ):
        if order < 1:
            raise UsageError("order must be >= 1")
        super().__init__(vocab_size, eos_token_id)
        self.order = int(order)
        self.table = dict(table)
        self._fallback = TokenDistribution.uniform(vocab_size)

    def _answer(self, request: BackendRequest) -> TokenDistribution:
        key = tuple(request.tokens[-self.order :])
        return self.table.get(key, self._fallback)


class DelayedBackend:
    """Wraps a backend and sleeps per call, optionally per context token."""

    def __init__(self, inner, per_call_s: float = 0.0, per_token_s: float = 0.0):
        self.inner = inner
        self.per_call_s = float(per_call_s)
        self.per_token_s = float(per_token_s)

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def eos_token_id(self):
        return self.inner.eos_token_id

    @property
    def truncation(self) -> str:
        return self.inner.truncation

    @property
    def calls(self) -> int:
        return self.inner.calls

    def next_token_distribution(self, request: BackendRequest) -> TokenDistribution:
        delay = self.per_call_s + self.per_token_s * len(request.tokens)
        if delay > 0:
            time.sleep(delay)
        return self.inner.next_token_distribution(request)


class FlakyBackend:
    """Wraps a backend and fails deterministically, for retry and flush tests.

    ``fail_first`` makes the first n calls raise (the transient-failure
    shape); ``fail_after`` makes every call past the first n raise (the
    mid-run outage shape).
    """

    def __init__(self, inner, fail_first: int = 0, fail_after: int | None = None):
        self.inner = inner
        self.fail_first = int(fail_first)
        self.fail_after = fail_after
        self.attempts = 0
        self._lock = threading.Lock()

    @property
    def vocab_size(self) -> int:
        return self.inner.vocab_size

    @property
    def eos_token_id(self):
        return self.inner.eos_token_id

    @property
    def truncation(self) -> str:
        return self.inner.truncation

    def next_token_distribution(self, request: BackendRequest) -> TokenDistribution:
        with self._lock:
            self.attempts += 1
            n = self.attempts
        if n <= self.fail_first:
            raise BackendError(f"injected failure on call {n}", attempts=1)
        if self.fail_after is not None and n > self.fail_after:
            raise BackendError(f"injected outage after {self.fail_after} calls", attempts=1)
        return self.inner.next_token_distribution(request)


class MockTokenizer:
    """Deterministic text <-> token mapping for mock-backed runs.

    Words hash into the vocab; runs of digits become one token per digit so
    numeric answers keep their per-digit structure. Not invertible:
    detokenize emits placeholder words.
    """

    def __init__(self, vocab_size: int):
        self.vocab_size = int(vocab_size)
        self.tokenizer_id = f"mock-crc32-{vocab_size}"

    def tokenize(self, text: str) -> list[int]:
        out: list[int] = []
        for word in text.split():
            if word.isdigit():
                out.extend(int(ch) % self.vocab_size for ch in word)
            else:
                out.append(zlib.crc32(word.encode("utf-8")) % self.vocab_size)
        return out

    def detokenize(self, tokens: Sequence[int]) -> str:
        return " ".join(f"t{int(t)}" for t in tokens)


def _parse_kv(text: str) -> dict[str, str]:
    out: dict[str, str] = {}
    if not text:
        return out
    for part in text.split(","):
        if not part:
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise UsageError(f"bad mock parameter {part!r}, expected key=value")
        out[key.strip()] = value.strip()
    return out


def parse_mock_spec(spec: str):
    """Build a mock backend from a CLI spec like ``planted:d=40,answer=5,vocab=50``.

    Supported kinds: ``planted``, ``planted_last``, ``uniform``. Optional
    keys on any kind: ``eos`` (token id), ``latency_ms`` and
    ``token_latency_us`` (wraps the mock in a delay).
    """
    kind, _, rest = spec.partition(":")
    kv = _parse_kv(rest)
    vocab = int(kv.pop("vocab", 64))
    eos = int(kv["eos"]) if "eos" in kv else None
    kv.pop("eos", None)
    latency_ms = float(kv.pop("latency_ms", 0.0))
    token_latency_us = float(kv.pop("token_latency_us", 0.0))

    if kind == "planted":
        backend = PlantedDependencyBackend(
            vocab_size=vocab,
            dependency_length=int(kv.pop("d", 40)),
            answer_token=int(kv.pop("answer", 1)),
            confident_prob=float(kv.pop("conf", 0.9)),
            eos_token_id=eos,
        )
    elif kind == "planted_last":
        backend = PlantedLastTokenBackend(
            vocab_size=vocab,
            answer_token=int(kv.pop("answer", 1)),
            confident_prob=float(kv.pop("conf", 0.9)),
            eos_token_id=eos,
        )
    elif kind == "uniform":
        backend = ConstantBackend(TokenDistribution.uniform(vocab), eos_token_id=eos)
    else:
        raise UsageError(f"unknown mock backend kind {kind!r}")
    if kv:
        raise UsageError(f"unknown mock parameters: {', '.join(sorted(kv))}")
    if latency_ms > 0 or token_latency_us > 0:
        return DelayedBackend(backend, per_call_s=latency_ms / 1e3, per_token_s=token_latency_us / 1e6)
    return backend
