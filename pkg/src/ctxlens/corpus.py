"""Corpus handling: document loading, bucketed sequence sampling, synthetic tasks.

Natural corpora are JSONL documents; sequences are contiguous token slices
cut at seeded-random points, bucketed by length, with the token after the
cut kept as ground truth. Synthetic generators plant a retrieval target at
a known distance from the end, so the short/long label is known by
construction.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .backends import Tokenizer
from .detection import LONG, SHORT, ContextLabel
from .errors import DataError

#: Length buckets for natural-corpus sampling: [32,100), [100,200), ..., [900,1000).
DEFAULT_BUCKETS: tuple[tuple[int, int], ...] = ((32, 100),) + tuple(
    (lo, lo + 100) for lo in range(100, 1000, 100)
)

NEEDLE_PREFIX = "The magic number is"
NEEDLE_QUERY = "The magic number mentioned in the provided text is"


@dataclass(frozen=True)
class Document:
    doc_id: str
    text: str | None = None
    tokens: tuple[int, ...] | None = None


@dataclass(frozen=True)
class SequenceSample:
    """One probe-ready sequence: tokens, optional ground truth, and provenance."""

    seq_id: str
    tokens: tuple[int, ...]
    next_token: int | None
    doc_id: str
    bucket: tuple[int, int]
    label: str | None = None  # planted short/long label, when the generator knows it

    def to_record(self) -> dict:
        return {
            "seq_id": self.seq_id,
            "tokens": list(self.tokens),
            "next_token": self.next_token,
            "doc_id": self.doc_id,
            "bucket": list(self.bucket),
            "label": self.label,
        }


def load_jsonl(path: str | Path) -> tuple[list[Document], list[dict]]:
    """Read documents ({"id", "text"} or {"id", "tokens"}) in file order.

    Malformed lines are returned as error records, not dropped silently. A
    file with no valid documents is an error.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"corpus file not found: {path}")
    docs: list[Document] = []
    errors: list[dict] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                doc_id = str(rec["id"])
                tokens = tuple(int(t) for t in rec["tokens"]) if "tokens" in rec else None
                text = rec.get("text")
                if tokens is None and text is None:
                    raise KeyError("need 'text' or 'tokens'")
                docs.append(Document(doc_id=doc_id, text=text, tokens=tokens))
            except (ValueError, KeyError, TypeError) as exc:
                errors.append({"line": lineno, "error": str(exc)})
    if not docs:
        raise DataError(f"no valid documents in {path}")
    return docs, errors


def load_sequences_jsonl(path: str | Path) -> tuple[list[SequenceSample], list[dict]]:
    """Read pre-cut sequences ({"seq_id", "tokens", "next_token"?, "label"?})."""
    path = Path(path)
    if not path.exists():
        raise DataError(f"sequence file not found: {path}")
    samples: list[SequenceSample] = []
    errors: list[dict] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                tokens = tuple(int(t) for t in rec["tokens"])
                if not tokens:
                    raise ValueError("empty token sequence")
                bucket = rec.get("bucket") or (len(tokens), len(tokens) + 1)
                samples.append(
                    SequenceSample(
                        seq_id=str(rec.get("seq_id", rec.get("id", f"line{lineno}"))),
                        tokens=tokens,
                        next_token=None if rec.get("next_token") is None else int(rec["next_token"]),
                        doc_id=str(rec.get("doc_id", "")),
                        bucket=(int(bucket[0]), int(bucket[1])),
                        label=rec.get("label"),
                    )
                )
            except (ValueError, KeyError, TypeError) as exc:
                errors.append({"line": lineno, "error": str(exc)})
    if not samples:
        raise DataError(f"no valid sequences in {path}")
    return samples, errors


def sample_sequences(
    doc_tokens: Sequence[int],
    n_per_bucket: int,
    buckets: Sequence[tuple[int, int]] = DEFAULT_BUCKETS,
    rng_seed: int = 0,
    with_ground_truth: bool = True,
    doc_id: str = "doc",
) -> tuple[list[SequenceSample], list[dict]]:
    """Cut seeded-random contiguous slices of the document, n per length bucket.

    A slice of length L in bucket [lo, hi) ends at a uniform position with
    room for the following ground-truth token. Buckets the document cannot
    fill are skipped with a warning record.
    """
    if n_per_bucket < 1:
        raise DataError("n_per_bucket must be >= 1")
    tokens = [int(t) for t in doc_tokens]
    n = len(tokens)
    reserve = 1 if with_ground_truth else 0
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng_seed)))
    samples: list[SequenceSample] = []
    warnings: list[dict] = []
    for lo, hi in buckets:
        if not 1 <= lo < hi:
            raise DataError(f"bad bucket [{lo}, {hi})")
        max_len = n - reserve
        if max_len < lo:
            warnings.append({"bucket": [lo, hi], "warning": f"document too short ({n} tokens), bucket skipped"})
            continue
        hi_eff = min(hi, max_len + 1)
        for i in range(n_per_bucket):
            length = int(rng.integers(lo, hi_eff))
            end = int(rng.integers(length, n + 1 - reserve))
            samples.append(
                SequenceSample(
                    seq_id=f"{doc_id}/b{lo}-{hi}/{i}",
                    tokens=tuple(tokens[end - length : end]),
                    next_token=tokens[end] if with_ground_truth else None,
                    doc_id=doc_id,
                    bucket=(lo, hi),
                )
            )
    return samples, warnings


@dataclass(frozen=True)
class SyntheticSpec:
    """Shape of one synthetic retrieval example.

    ``needle_pos`` (token offset of the planted statement) drives the magic
    number task; ``answer_line_distance`` (lines from the end, 1 = last)
    drives the register task. ``window`` is the suffix size that defines the
    short label.
    """

    kind: str  # "niah_magic" | "longeval_registers"
    total_len: int
    needle_pos: int | None = None
    answer_line_distance: int | None = None
    digits: int = 6
    window: int = 32

    def __post_init__(self):
        if self.kind not in ("niah_magic", "longeval_registers"):
            raise DataError(f"unknown synthetic kind {self.kind!r}")
        if self.total_len < 1:
            raise DataError("total_len must be >= 1")
        if self.window < 1:
            raise DataError("window must be >= 1")


_FILLER_WORDS = (
    "the quick brown fox jumps over a lazy dog while distant hills "
    "gather morning light and rivers carry small boats toward the sea"
).split()


def default_filler_tokens(tokenizer: Tokenizer, n: int, rng_seed: int = 0) -> list[int]:
    """Filler text tokens for synthetic prompts, cycled from a small word list."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng_seed)))
    words = [_FILLER_WORDS[int(rng.integers(0, len(_FILLER_WORDS)))] for _ in range(n)]
    out = tokenizer.tokenize(" ".join(words))
    while len(out) < n:
        out.extend(out[: n - len(out)])
    return out[:n]


def gen_niah(
    spec: SyntheticSpec,
    filler_tokens: Sequence[int],
    tokenizer: Tokenizer,
    rng_seed: int = 0,
) -> tuple[SequenceSample, ContextLabel]:
    """Magic-number retrieval prompt with the statement planted at ``needle_pos``.

    The prompt is filler + needle + filler + query, ``total_len`` tokens in
    all; ground truth is the number's first token. Short iff the statement
    starts within the final ``window`` tokens.
    """
    if spec.kind != "niah_magic" or spec.needle_pos is None:
        raise DataError("niah generator needs kind='niah_magic' and needle_pos")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng_seed)))
    number = f"{int(rng.integers(0, 10 ** spec.digits)):0{spec.digits}d}"
    needle = tokenizer.tokenize(f"{NEEDLE_PREFIX} {number}")
    query = tokenizer.tokenize(NEEDLE_QUERY)
    answer = tokenizer.tokenize(number)
    body = spec.total_len - len(query)
    if spec.needle_pos < 0 or spec.needle_pos + len(needle) > body:
        raise DataError(
            f"needle at {spec.needle_pos} (length {len(needle)}) collides with the query region"
        )
    filler = list(filler_tokens)
    need = body - len(needle)
    if len(filler) < need:
        raise DataError(f"need {need} filler tokens, got {len(filler)}")
    tokens = filler[: spec.needle_pos] + needle + filler[spec.needle_pos : need] + query
    label = SHORT if spec.total_len - spec.needle_pos <= spec.window else LONG
    sample = SequenceSample(
        seq_id=f"niah/{rng_seed}",
        tokens=tuple(tokens),
        next_token=answer[0],
        doc_id="niah",
        bucket=(len(tokens), len(tokens) + 1),
        label=label,
    )
    return sample, ContextLabel(label, oracle="planted")


def gen_longeval(
    spec: SyntheticSpec,
    tokenizer: Tokenizer,
    rng_seed: int = 0,
) -> tuple[SequenceSample, ContextLabel]:
    """Register-lookup prompt: numbered lines, query about one of them.

    The queried line sits ``answer_line_distance`` lines from the end
    (1 = last line). Short iff that line starts within the final ``window``
    tokens of the prompt.
    """
    if spec.kind != "longeval_registers" or spec.answer_line_distance is None:
        raise DataError("longeval generator needs kind='longeval_registers' and answer_line_distance")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(rng_seed)))
    lines: list[list[int]] = []
    line_ids: list[str] = []
    values: list[str] = []
    total = 0
    probe = tokenizer.tokenize("What is the REGISTER_CONTENT of line 00000")
    while True:
        line_id = f"{int(rng.integers(0, 100000)):05d}"
        value = f"{int(rng.integers(0, 100000)):05d}"
        toks = tokenizer.tokenize(f"line {line_id} REGISTER_CONTENT is {value}")
        if lines and total + len(toks) + len(probe) > spec.total_len:
            break
        lines.append(toks)
        line_ids.append(line_id)
        values.append(value)
        total += len(toks)
        if total + len(probe) >= spec.total_len:
            break
    if len(lines) < 2:
        raise DataError("total_len too small for at least two register lines")
    if not 1 <= spec.answer_line_distance <= len(lines):
        raise DataError(f"answer_line_distance {spec.answer_line_distance} outside 1..{len(lines)}")
    target = len(lines) - spec.answer_line_distance
    query = tokenizer.tokenize(f"What is the REGISTER_CONTENT of line {line_ids[target]}")
    answer = tokenizer.tokenize(values[target])
    tokens: list[int] = []
    starts: list[int] = []
    for toks in lines:
        starts.append(len(tokens))
        tokens.extend(toks)
    tokens.extend(query)
    label = SHORT if len(tokens) - starts[target] <= spec.window else LONG
    sample = SequenceSample(
        seq_id=f"longeval/{rng_seed}",
        tokens=tuple(tokens),
        next_token=answer[0],
        doc_id="longeval",
        bucket=(len(tokens), len(tokens) + 1),
        label=label,
    )
    return sample, ContextLabel(label, oracle="planted")


class TokenDiskCache:
    """Document tokenizations cached on disk, keyed by (tokenizer id, doc id)."""

    def __init__(self, cache_dir: str | Path):
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    def _path(self, tokenizer_id: str, doc_id: str) -> Path:
        digest = hashlib.sha256(f"{tokenizer_id}\x00{doc_id}".encode("utf-8")).hexdigest()[:32]
        return self.cache_dir / f"{digest}.json"

    def get(self, tokenizer_id: str, doc_id: str) -> list[int] | None:
        path = self._path(tokenizer_id, doc_id)
        if not path.exists():
            return None
        return [int(t) for t in json.loads(path.read_text(encoding="utf-8"))]

    def put(self, tokenizer_id: str, doc_id: str, tokens: Sequence[int]) -> None:
        path = self._path(tokenizer_id, doc_id)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps([int(t) for t in tokens]), encoding="utf-8")
        tmp.replace(path)

    def tokens_for(self, doc: Document, tokenizer: Tokenizer) -> list[int]:
        if doc.tokens is not None:
            return list(doc.tokens)
        hit = self.get(tokenizer.tokenizer_id, doc.doc_id)
        if hit is not None:
            return hit
        if doc.text is None:
            raise DataError(f"document {doc.doc_id} has neither text nor tokens")
        tokens = tokenizer.tokenize(doc.text)
        self.put(tokenizer.tokenizer_id, doc.doc_id, tokens)
        return tokens
