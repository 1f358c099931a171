"""Distributions over a token vocabulary and the divergences between them.

All divergences use the natural logarithm by default; pass ``base=2.0`` to
switch. Under natural log the Jensen-Shannon distance is bounded by
sqrt(ln 2) ~= 0.832555.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientData, InvalidDistribution, VocabMismatch

#: Upper bound of the Jensen-Shannon distance under natural log.
JSD_MAX = math.sqrt(math.log(2.0))

_SUM_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TokenDistribution:
    """A probability distribution over token ids 0..vocab_size-1.

    The probability array is float64 and read-only. Build instances through
    :meth:`from_probs` (validates) or the ``point_mass`` / ``uniform``
    constructors.
    """

    probs: np.ndarray

    @property
    def vocab_size(self) -> int:
        return int(self.probs.shape[0])

    @classmethod
    def from_probs(cls, values: Sequence[float] | np.ndarray) -> "TokenDistribution":
        arr = np.asarray(values, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise InvalidDistribution("probabilities must be a non-empty 1-d sequence")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise InvalidDistribution("probabilities must be finite and non-negative")
        total = float(arr.sum())
        if abs(total - 1.0) > _SUM_TOL:
            raise InvalidDistribution(f"probabilities sum to {total!r}, expected 1 within {_SUM_TOL}")
        arr = arr.copy()
        arr.flags.writeable = False
        return cls(arr)

    @classmethod
    def from_weights(cls, weights: Sequence[float] | np.ndarray) -> "TokenDistribution":
        """Normalize non-negative weights with positive total into a distribution."""
        arr = np.asarray(weights, dtype=np.float64)
        if arr.ndim != 1 or arr.shape[0] < 1:
            raise InvalidDistribution("weights must be a non-empty 1-d sequence")
        if np.any(arr < 0.0) or not np.all(np.isfinite(arr)):
            raise InvalidDistribution("weights must be finite and non-negative")
        total = float(arr.sum())
        if total <= 0.0:
            raise InvalidDistribution("weights must have positive total mass")
        out = arr / total
        out.flags.writeable = False
        return cls(out)

    @classmethod
    def point_mass(cls, token: int, vocab_size: int) -> "TokenDistribution":
        if not 0 <= token < vocab_size:
            raise VocabMismatch(f"token {token} outside vocab of size {vocab_size}")
        arr = np.zeros(vocab_size, dtype=np.float64)
        arr[token] = 1.0
        arr.flags.writeable = False
        return cls(arr)

    @classmethod
    def uniform(cls, vocab_size: int) -> "TokenDistribution":
        if vocab_size < 1:
            raise InvalidDistribution("vocab_size must be >= 1")
        arr = np.full(vocab_size, 1.0 / vocab_size, dtype=np.float64)
        arr.flags.writeable = False
        return cls(arr)

    def entry(self, token: int) -> float:
        if not 0 <= token < self.vocab_size:
            raise VocabMismatch(f"token {token} outside vocab of size {self.vocab_size}")
        return float(self.probs[token])

    def support(self) -> "SupportSet":
        return SupportSet.of(np.nonzero(self.probs)[0])

    def same_values(self, other: "TokenDistribution") -> bool:
        """Bitwise equality of the probability arrays."""
        return self.vocab_size == other.vocab_size and bool(np.array_equal(self.probs, other.probs))


class SupportSet(frozenset):
    """A set of token ids, typically the support of a decoded distribution."""

    @classmethod
    def of(cls, tokens: Iterable[int]) -> "SupportSet":
        return cls(int(t) for t in tokens)


@dataclass(frozen=True)
class SetMetrics:
    """Recall/precision/F1 between two token sets.

    ``recall`` is None when the reference set is empty, ``precision`` is None
    when the candidate set is empty; F1 is 0 whenever either side is zero or
    undefined.
    """

    recall: float | None
    precision: float | None
    f1: float


def _check_same_vocab(p1: TokenDistribution, p2: TokenDistribution) -> None:
    if p1.vocab_size != p2.vocab_size:
        raise VocabMismatch(f"vocab sizes differ: {p1.vocab_size} vs {p2.vocab_size}")


def kl(p1: TokenDistribution, p2: TokenDistribution, base: float = math.e) -> float:
    """KL divergence sum_t p1_t log(p1_t / p2_t), with 0 * log 0 := 0.

    Returns ``inf`` when p1 puts mass where p2 has none.
    """
    _check_same_vocab(p1, p2)
    a = p1.probs
    b = p2.probs
    pos = a > 0.0
    if np.any(b[pos] == 0.0):
        return math.inf
    terms = a[pos] * np.log(a[pos] / b[pos])
    val = float(terms.sum())
    if base != math.e:
        val /= math.log(base)
    return val


def jsd(p1: TokenDistribution, p2: TokenDistribution, base: float = math.e) -> float:
    """Jensen-Shannon distance sqrt(KL(p1||q)/2 + KL(p2||q)/2), q the midpoint.

    Symmetric in its arguments by construction; bounded by sqrt(log 2).
    """
    _check_same_vocab(p1, p2)
    a = p1.probs
    b = p2.probs
    q = (a + b) / 2.0
    pos_a = a > 0.0
    pos_b = b > 0.0
    kl_a = float((a[pos_a] * np.log(a[pos_a] / q[pos_a])).sum())
    kl_b = float((b[pos_b] * np.log(b[pos_b] / q[pos_b])).sum())
    sq = 0.5 * kl_a + 0.5 * kl_b
    if base != math.e:
        sq /= math.log(base)
    # Rounding can push the squared distance a hair below zero.
    return math.sqrt(max(sq, 0.0))


def tvd(p1: TokenDistribution, p2: TokenDistribution) -> float:
    """Total variation distance, half the L1 difference."""
    _check_same_vocab(p1, p2)
    # Rounding can overshoot the mathematical bound of 1 by an ulp.
    return min(1.0, 0.5 * float(np.abs(p1.probs - p2.probs).sum()))


def set_metrics(candidate: Iterable[int], reference: Iterable[int]) -> SetMetrics:
    """Recall/precision/F1 of ``candidate`` against ``reference``.

    Empty operands make the corresponding rate undefined (None) rather than
    raising; F1 degrades to 0 in that case.
    """
    cand = frozenset(candidate)
    ref = frozenset(reference)
    inter = len(cand & ref)
    recall = None if len(ref) == 0 else inter / len(ref)
    precision = None if len(cand) == 0 else inter / len(cand)
    if not recall or not precision:
        f1 = 0.0
    else:
        f1 = 2.0 * precision * recall / (precision + recall)
    return SetMetrics(recall=recall, precision=precision, f1=f1)


@dataclass(frozen=True)
class PowerLawFit:
    """Least-squares fit of y = a * x**(-b) in log-log space.

    ``b_hat`` is the positive decay exponent; ``slope`` is the raw log-log
    slope (-b_hat), which is the sign convention used when reporting.
    """

    a: float
    b_hat: float
    r_squared: float

    @property
    def slope(self) -> float:
        return -self.b_hat

    def predict(self, x: float) -> float:
        return self.a * x**-self.b_hat


def fit_power_law(points: Sequence[tuple[float, float]]) -> PowerLawFit:
    """Fit y = a * x**(-b) by OLS on (log x, log y).

    Points with y <= 0 are dropped (empty histogram bins carry no
    information in log space). Fewer than two usable points with distinct x
    is an error.
    """
    usable = [(x, y) for x, y in points if y > 0.0]
    if any(x <= 0.0 for x, _ in usable):
        raise InvalidDistribution("x values must be positive for a log-log fit")
    xs = np.array([x for x, _ in usable], dtype=np.float64)
    ys = np.array([y for _, y in usable], dtype=np.float64)
    if xs.size < 2 or np.unique(xs).size < 2:
        raise InsufficientData("need at least two usable points with distinct x to fit a power law")
    lx = np.log(xs)
    ly = np.log(ys)
    slope, intercept = np.polyfit(lx, ly, 1)
    resid = ly - (slope * lx + intercept)
    ss_res = float((resid**2).sum())
    ss_tot = float(((ly - ly.mean()) ** 2).sum())
    r2 = 1.0 if ss_tot == 0.0 else 1.0 - ss_res / ss_tot
    return PowerLawFit(a=float(math.exp(intercept)), b_hat=float(-slope), r_squared=r2)
