"""Reference-based text scores: token F1, BLEU-4, and longest-common-subsequence F.

Text is lowercased, stripped of punctuation, and whitespace-collapsed before
scoring. Token F1 additionally drops the articles a/an/the (the reading-
comprehension convention); the n-gram and subsequence metrics keep them.
"""

from __future__ import annotations

import math
import string
from collections import Counter

_ARTICLES = {"a", "an", "the"}
_PUNCT_TABLE = str.maketrans("", "", string.punctuation)


def normalize_text(text: str, drop_articles: bool = False) -> list[str]:
    words = text.lower().translate(_PUNCT_TABLE).split()
    if drop_articles:
        words = [w for w in words if w not in _ARTICLES]
    return words


def token_f1(pred: str, gold: str) -> float:
    """Multiset F1 over normalized tokens; two empty sides score 1, one empty side 0."""
    p = normalize_text(pred, drop_articles=True)
    g = normalize_text(gold, drop_articles=True)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    overlap = sum((Counter(p) & Counter(g)).values())
    if overlap == 0:
        return 0.0
    precision = overlap / len(p)
    recall = overlap / len(g)
    return 2 * precision * recall / (precision + recall)


def _ngram_counts(tokens: list[str], n: int) -> Counter:
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu(pred: str, gold: str, max_order: int = 4) -> float:
    """Sentence BLEU with uniform weights and a brevity penalty.

    Zero clipped-match counts at order >= 2 are smoothed add-1; a zero
    unigram precision short-circuits to 0.
    """
    p = normalize_text(pred)
    g = normalize_text(gold)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    log_sum = 0.0
    for n in range(1, max_order + 1):
        pred_counts = _ngram_counts(p, n)
        gold_counts = _ngram_counts(g, n)
        matches = sum(min(c, gold_counts[ng]) for ng, c in pred_counts.items())
        total = max(len(p) - n + 1, 0)
        if n == 1:
            if matches == 0:
                return 0.0
            precision = matches / total
        elif matches == 0:
            precision = (matches + 1) / (total + 1)
        else:
            precision = matches / total
        log_sum += math.log(precision) / max_order
    brevity = 1.0 if len(p) >= len(g) else math.exp(1.0 - len(g) / len(p))
    return brevity * math.exp(log_sum)


def _lcs_len(a: list[str], b: list[str]) -> int:
    # One-row dynamic program; quadratic time, linear memory.
    prev = [0] * (len(b) + 1)
    for i in range(1, len(a) + 1):
        cur = [0] * (len(b) + 1)
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                cur[j] = prev[j - 1] + 1
            else:
                cur[j] = max(prev[j], cur[j - 1])
        prev = cur
    return prev[len(b)]


def rouge_l(pred: str, gold: str) -> float:
    """F-measure of the longest common subsequence of normalized tokens."""
    p = normalize_text(pred)
    g = normalize_text(gold)
    if not p and not g:
        return 1.0
    if not p or not g:
        return 0.0
    lcs = _lcs_len(p, g)
    if lcs == 0:
        return 0.0
    precision = lcs / len(p)
    recall = lcs / len(g)
    return 2 * precision * recall / (precision + recall)


METRIC_FUNCS = {"token_f1": token_f1, "bleu": bleu, "rouge_l": rouge_l}


def score_all(pred: str, gold: str) -> dict[str, float]:
    return {name: fn(pred, gold) for name, fn in METRIC_FUNCS.items()}


def summarize(values: list[float]) -> dict[str, float]:
    """Average and best-of-n aggregation for per-sample scores."""
    if not values:
        return {"mean": 0.0, "best": 0.0}
    return {"mean": sum(values) / len(values), "best": max(values)}
