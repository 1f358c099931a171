"""Backend protocol: anything that maps a token sequence to a next-token distribution."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Protocol, Sequence, runtime_checkable

from ..dist import TokenDistribution
from ..errors import SequenceTooShort


@dataclass(frozen=True)
class BackendRequest:
    """One next-token query.

    ``tokens`` is the (possibly truncated) context actually shown to the
    model. ``full_length`` records the length of the original sequence so
    backends that support masked truncation could honor it; the backends
    shipped here condition on the literal suffix only.
    """

    tokens: tuple[int, ...]
    full_length: int


@runtime_checkable
class Backend(Protocol):
    vocab_size: int
    eos_token_id: int | None
    truncation: str

    def next_token_distribution(self, request: BackendRequest) -> TokenDistribution: ...


@runtime_checkable
class Tokenizer(Protocol):
    tokenizer_id: str

    def tokenize(self, text: str) -> list[int]: ...

    def detokenize(self, tokens: Sequence[int]) -> str: ...


def prefix_distribution(s: Sequence[int], ell: int, backend: Backend) -> TokenDistribution:
    """Next-token distribution conditioned on the final ``ell`` tokens of ``s``."""
    n = len(s)
    if not 1 <= ell <= n:
        raise SequenceTooShort(f"prefix length {ell} outside [1, {n}]")
    suffix = tuple(int(t) for t in s[n - ell :])
    return backend.next_token_distribution(BackendRequest(tokens=suffix, full_length=n))
