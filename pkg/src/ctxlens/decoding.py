"""Decoding strategies: truncate-and-renormalize transforms of a distribution.

A strategy keeps a subset of tokens (greedy keeps the argmax, top-k the k
most probable, nucleus the smallest probability-sorted prefix covering mass
p, adaptive every token with probability >= its threshold) and renormalizes
the kept entries. Ties are always broken toward the lower token id.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dist import TokenDistribution
from .errors import StrategyError, VocabMismatch

STRATEGY_KINDS = ("greedy", "top_k", "nucleus", "adaptive")


@dataclass(frozen=True)
class DecodingStrategy:
    """A named truncation rule plus its single parameter.

    Text form round-trips through :meth:`parse` / :meth:`token`:
    ``greedy``, ``topk:5``, ``nucleus:0.9``, ``adaptive:0.001``.
    """

    kind: str
    k: int | None = None
    p: float | None = None
    eps: float | None = None

    def __post_init__(self):
        if self.kind not in STRATEGY_KINDS:
            raise StrategyError(f"unknown strategy kind {self.kind!r}")
        if self.kind == "top_k":
            if self.k is None or self.k < 1:
                raise StrategyError("top_k needs k >= 1")
        elif self.kind == "nucleus":
            if self.p is None or not 0.0 < self.p <= 1.0:
                raise StrategyError("nucleus needs p in (0, 1]")
        elif self.kind == "adaptive":
            if self.eps is None or not 0.0 < self.eps < 1.0:
                raise StrategyError("adaptive needs eps in (0, 1)")

    @classmethod
    def greedy(cls) -> "DecodingStrategy":
        return cls("greedy")

    @classmethod
    def top_k(cls, k: int) -> "DecodingStrategy":
        return cls("top_k", k=int(k))

    @classmethod
    def nucleus(cls, p: float = 0.9) -> "DecodingStrategy":
        return cls("nucleus", p=float(p))

    @classmethod
    def adaptive(cls, eps: float = 0.001) -> "DecodingStrategy":
        return cls("adaptive", eps=float(eps))

    @classmethod
    def parse(cls, text: str) -> "DecodingStrategy":
        head, sep, arg = text.strip().partition(":")
        try:
            if head == "greedy":
                if sep:
                    raise StrategyError("greedy takes no parameter")
                return cls.greedy()
            if head == "topk":
                return cls.top_k(int(arg))
            if head == "nucleus":
                return cls.nucleus(float(arg))
            if head == "adaptive":
                return cls.adaptive(float(arg))
        except ValueError as exc:
            raise StrategyError(f"bad strategy parameter in {text!r}") from exc
        raise StrategyError(f"unknown strategy {text!r}")

    def token(self) -> str:
        if self.kind == "greedy":
            return "greedy"
        if self.kind == "top_k":
            return f"topk:{self.k}"
        if self.kind == "nucleus":
            return f"nucleus:{self.p:g}"
        return f"adaptive:{self.eps:g}"


def _sorted_ids(probs: np.ndarray) -> np.ndarray:
    # Descending probability; stable sort keeps ascending token id on ties.
    return np.argsort(-probs, kind="stable")


def _keep(probs: np.ndarray, kept_ids: np.ndarray) -> TokenDistribution:
    out = np.zeros_like(probs)
    mass = probs[kept_ids].sum()
    out[kept_ids] = probs[kept_ids] / mass
    out.flags.writeable = False
    return TokenDistribution(out)


def apply_strategy(dist: TokenDistribution, strategy: DecodingStrategy) -> TokenDistribution:
    """Truncate ``dist`` per ``strategy`` and renormalize the kept entries."""
    probs = dist.probs
    order = _sorted_ids(probs)
    if strategy.kind == "greedy":
        return _keep(probs, order[:1])
    if strategy.kind == "top_k":
        k = min(strategy.k, dist.vocab_size)
        return _keep(probs, order[:k])
    if strategy.kind == "nucleus":
        cum = np.cumsum(probs[order])
        cut = int(np.searchsorted(cum, strategy.p, side="left")) + 1
        return _keep(probs, order[:cut])
    # adaptive: every token with probability >= eps, at least the argmax
    n = int((probs >= strategy.eps).sum())
    return _keep(probs, order[: max(n, 1)])


def top1(dist: TokenDistribution) -> int:
    """Most probable token id, lowest id on ties."""
    return int(np.argmax(dist.probs))


def confidence(dist: TokenDistribution) -> float:
    """Gap between the two largest probabilities."""
    if dist.vocab_size < 2:
        raise VocabMismatch("confidence needs a vocab of at least 2")
    two = np.partition(dist.probs, -2)[-2:]
    return float(two[1] - two[0])


def sample(dist: TokenDistribution, rng_seed: int) -> int:
    """Draw one token by inverse CDF in token-id order.

    Uses a counter-based generator keyed on ``rng_seed``, so the same
    (distribution, seed) pair always yields the same token.
    """
    gen = np.random.Generator(np.random.Philox(key=rng_seed))
    u = gen.random()
    cdf = np.cumsum(dist.probs)
    idx = int(np.searchsorted(cdf, u, side="right"))
    if idx >= dist.vocab_size or dist.probs[idx] == 0.0:
        # u landed past the last positive entry through rounding
        idx = int(np.nonzero(dist.probs)[0][-1])
    return idx


def derive_seed(*parts: int) -> int:
    """Mix integers into a fresh seed; used to split one run seed per draw."""
    return int(np.random.SeedSequence(list(parts)).generate_state(1, np.uint64)[0])
