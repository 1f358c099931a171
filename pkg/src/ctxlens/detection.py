"""Long- vs short-context detection from a single pair of model calls.

The score compares the decoded next-token distribution of a short suffix
against the full context; a large divergence means the model's prediction
still depends on far-away tokens. Labeling oracles, probability-shift
diagnostics, and threshold selection (ROC, Youden) live here too.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .backends import Backend, prefix_distribution
from .decoding import DecodingStrategy, apply_strategy
from .dist import JSD_MAX, SupportSet, TokenDistribution, jsd
from .errors import InsufficientData, NotLabelable, SequenceTooShort, StrategyError, VocabMismatch
from .probe import PrefixGrid, mcl

#: Floor applied to probabilities inside log ratios so they stay finite.
PROB_FLOOR = 1e-6

SHORT = "short"
LONG = "long"

SCENARIOS = ("best", "bad", "worst", "neutral")


@dataclass(frozen=True)
class LsdsConfig:
    """Settings for the divergence score.

    ``short_len`` is a token count when int, or a fraction of the sequence
    length when a float in (0, 1). ``tau`` is the long/short decision
    threshold, ``gamma`` the boosting gate.
    """

    short_len: int | float = 32
    strategy: DecodingStrategy = DecodingStrategy.nucleus(0.9)
    tau: float = 0.6
    gamma: float = 0.1225

    def __post_init__(self):
        if isinstance(self.short_len, bool) or (
            isinstance(self.short_len, int) and self.short_len < 1
        ):
            raise StrategyError("short_len must be a positive int or a fraction in (0, 1)")
        if isinstance(self.short_len, float) and not 0.0 < self.short_len < 1.0:
            raise StrategyError("fractional short_len must lie in (0, 1)")
        if not 0.0 <= self.tau <= JSD_MAX:
            raise StrategyError(f"tau must lie in [0, {JSD_MAX}]")
        if not 0.0 <= self.gamma <= JSD_MAX:
            raise StrategyError(f"gamma must lie in [0, {JSD_MAX}]")

    def resolved_short_len(self, seq_len: int) -> int:
        if isinstance(self.short_len, float):
            return max(1, int(self.short_len * seq_len))
        return int(self.short_len)


@dataclass(frozen=True)
class ContextLabel:
    """A short/long verdict; ``oracle`` names the labeling source, None for predictions."""

    label: str
    oracle: str | None = None

    def __post_init__(self):
        if self.label not in (SHORT, LONG):
            raise StrategyError(f"label must be {SHORT!r} or {LONG!r}")

    @property
    def is_long(self) -> bool:
        return self.label == LONG


def _decoded_pair(
    s: Sequence[int], cfg: LsdsConfig, backend: Backend
) -> tuple[TokenDistribution, TokenDistribution]:
    ell = cfg.resolved_short_len(len(s))
    if len(s) <= ell:
        raise SequenceTooShort(f"sequence length {len(s)} must exceed short prefix {ell}")
    short = apply_strategy(prefix_distribution(s, ell, backend), cfg.strategy)
    full = apply_strategy(prefix_distribution(s, len(s), backend), cfg.strategy)
    return short, full


def lsds(s: Sequence[int], cfg: LsdsConfig, backend: Backend) -> float:
    """Divergence between the decoded short-suffix and full-context distributions."""
    short, full = _decoded_pair(s, cfg, backend)
    return jsd(short, full)


def classify(s: Sequence[int], cfg: LsdsConfig, backend: Backend) -> ContextLabel:
    """Long iff the score reaches ``tau``; the boundary counts as long."""
    return ContextLabel(LONG if lsds(s, cfg, backend) >= cfg.tau else SHORT)


def mcl_oracle_label(
    s: Sequence[int],
    t: int,
    delta: float,
    grid: PrefixGrid,
    backend: Backend,
) -> ContextLabel:
    """Long iff the minimal context length exceeds the grid start.

    An unresolved probe cannot be labeled and raises.
    """
    result = mcl(s, t, delta, grid, backend)
    if not result.resolved:
        raise NotLabelable("probe never resolved, sequence is not labelable")
    label = LONG if result.resolved_length > grid.start else SHORT
    return ContextLabel(label, oracle="mcl")


def lsd_lcl_oracle_label(
    s: Sequence[int],
    t: int,
    backend: Backend,
    short_len: int = 32,
    lsd_threshold: float = 2.0,
    lcl_threshold: float = -1.0,
) -> ContextLabel:
    """Label from raw (pre-decoding) log-probabilities of the true token.

    Long iff the full context lifts the token's log-probability by more than
    ``lsd_threshold`` nats over the short suffix AND the full-context
    log-probability itself is at least ``lcl_threshold``.
    """
    if not 0 <= t < backend.vocab_size:
        raise VocabMismatch(f"token {t} outside vocab {backend.vocab_size}")
    if len(s) <= short_len:
        raise SequenceTooShort(f"sequence length {len(s)} must exceed short prefix {short_len}")
    p_full = prefix_distribution(s, len(s), backend).entry(t)
    p_short = prefix_distribution(s, short_len, backend).entry(t)
    lsd = math.log(max(p_full, PROB_FLOOR)) - math.log(max(p_short, PROB_FLOOR))
    lcl = math.log(max(p_full, PROB_FLOOR))
    label = LONG if (lsd > lsd_threshold and lcl >= lcl_threshold) else SHORT
    return ContextLabel(label, oracle="lsd_lcl")


def lsps(t: int, s: Sequence[int], cfg: LsdsConfig, backend: Backend) -> float:
    """Shift of the token's decoded probability when the full context is revealed."""
    short, full = _decoded_pair(s, cfg, backend)
    return full.entry(t) - short.entry(t)


def lspr(t: int, s: Sequence[int], cfg: LsdsConfig, backend: Backend) -> float:
    """Log-ratio form of the shift, with both operands floored at PROB_FLOOR."""
    short, full = _decoded_pair(s, cfg, backend)
    return math.log(max(full.entry(t), PROB_FLOOR)) - math.log(max(short.entry(t), PROB_FLOOR))


def scenario(t_hat: int, boosted: SupportSet, full_dist: TokenDistribution) -> str:
    """Classify where the realized next token fell relative to the boosted set.

    ``best``: in the set and the most probable member under the full-context
    distribution; ``bad``: in the set but not its most probable member;
    ``worst``: outside a nonempty set; ``neutral``: the set is empty.
    """
    if len(boosted) == 0:
        return "neutral"
    if t_hat in boosted:
        best = max(full_dist.entry(u) for u in boosted)
        return "best" if full_dist.entry(t_hat) >= best else "bad"
    return "worst"


def roc_auc(scored: Sequence[tuple[float, bool]]) -> float:
    """Probability a random long sequence outscores a random short one; ties count half."""
    pos = sorted(score for score, is_long in scored if is_long)
    neg = sorted(score for score, is_long in scored if not is_long)
    if not pos or not neg:
        raise InsufficientData("roc_auc needs both long and short examples")
    # Midrank formulation: rank-sum of positives within the pooled sample.
    pooled = sorted((score, 1 if is_long else 0) for score, is_long in scored)
    n = len(pooled)
    rank_sum_pos = 0.0
    i = 0
    while i < n:
        j = i
        while j < n and pooled[j][0] == pooled[i][0]:
            j += 1
        midrank = (i + 1 + j) / 2.0  # average of ranks i+1..j
        rank_sum_pos += midrank * sum(flag for _, flag in pooled[i:j])
        i = j
    n_pos = len(pos)
    n_neg = len(neg)
    return (rank_sum_pos - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


@dataclass(frozen=True)
class YoudenPoint:
    """Threshold maximizing TPR - FPR, with the rates achieved there."""

    theta: float
    j: float
    tpr: float
    fpr: float


def _rates_at(scored: Sequence[tuple[float, bool]], theta: float) -> tuple[float, float]:
    n_pos = sum(1 for _, is_long in scored if is_long)
    n_neg = len(scored) - n_pos
    tp = sum(1 for score, is_long in scored if is_long and score >= theta)
    fp = sum(1 for score, is_long in scored if not is_long and score >= theta)
    return tp / n_pos, fp / n_neg


def youden_threshold(scored: Sequence[tuple[float, bool]]) -> YoudenPoint:
    """Best threshold over midpoints of adjacent distinct scores plus open ends.

    Ties on J resolve to the smallest threshold.
    """
    if not any(is_long for _, is_long in scored) or not any(not is_long for _, is_long in scored):
        raise InsufficientData("youden threshold needs both long and short examples")
    distinct = sorted({score for score, _ in scored})
    candidates = [-math.inf]
    candidates.extend((a + b) / 2.0 for a, b in zip(distinct, distinct[1:]))
    candidates.append(math.inf)
    best: YoudenPoint | None = None
    for theta in candidates:
        tpr, fpr = _rates_at(scored, theta)
        j = tpr - fpr
        if best is None or j > best.j:
            best = YoudenPoint(theta=theta, j=j, tpr=tpr, fpr=fpr)
    return best


def tau_sweep(scored: Sequence[tuple[float, bool]], taus: Sequence[float]) -> list[dict]:
    """TPR/FPR/J and accuracy of the ``score >= tau`` rule at each requested tau."""
    rows = []
    n = len(scored)
    for tau in taus:
        tpr, fpr = _rates_at(scored, tau)
        correct = sum(1 for score, is_long in scored if (score >= tau) == is_long)
        rows.append(
            {"tau": tau, "tpr": tpr, "fpr": fpr, "j": tpr - fpr, "accuracy": correct / n}
        )
    return rows
