import json

import numpy as np
import pytest

from ctxlens.dist import TokenDistribution


def rand_dist(rng: np.random.Generator, vocab: int, zeros: bool = False) -> TokenDistribution:
    """Random point on the simplex; optionally with some zero entries."""
    w = rng.random(vocab)
    if zeros and vocab > 2:
        k = int(rng.integers(1, vocab - 1))
        idx = rng.choice(vocab, size=k, replace=False)
        w[idx] = 0.0
    if w.sum() == 0.0:
        w[0] = 1.0
    return TokenDistribution.from_weights(w)


def write_jsonl(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)
