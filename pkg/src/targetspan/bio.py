"""BIO tagging of span sets, entity-level tag evaluation, and CoNLL files.

Tags are the plain strings ``"B"``, ``"I"`` and ``"O"``; spans are untyped.
Decoding is total: an ``I`` that follows an ``O`` (or starts the sequence)
opens a new span as if it were ``B``, and the repair is logged.

CoNLL layout: one ``token<TAB>tag`` line per token, one blank line between
samples, optionally preceded by a ``# id = <sample id>`` comment line.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

from targetspan.exceptions import InputError, ParseError
from targetspan.metrics import harmonic_mean
from targetspan.spans import Span, SpanSet, TokenizedContent, validate_span_set

logger = logging.getLogger(__name__)

B, I, O = "B", "I", "O"
TAGS = frozenset((B, I, O))

TagSequence = Sequence[str]


class TagMetrics(NamedTuple):
    f1: float
    precision: float
    recall: float
    accuracy: float


def encode_bio(content: TokenizedContent, spans: SpanSet) -> list[str]:
    validate_span_set(content, spans)
    tags = [O] * len(content)
    for span in spans:
        tags[span.start] = B
        for i in range(span.start + 1, span.end):
            tags[i] = I
    return tags


def orphan_positions(tags: TagSequence) -> list[int]:
    """Indices of ``I`` tags with no preceding ``B``/``I``."""
    _check_tags(tags)
    return [i for i, t in enumerate(tags) if t == I and (i == 0 or tags[i - 1] == O)]


def decode_bio(tags: TagSequence) -> SpanSet:
    _check_tags(tags)
    spans = []
    start = None
    for i, tag in enumerate(tags):
        if tag == B or (tag == I and start is None):
            if tag == I:
                logger.warning("orphan I at position %d treated as B", i)
            if start is not None:
                spans.append(Span(start, i))
            start = i
        elif tag == O and start is not None:
            spans.append(Span(start, i))
            start = None
    if start is not None:
        spans.append(Span(start, len(tags)))
    return SpanSet(tuple(spans))


def _check_tags(tags: TagSequence) -> None:
    bad = {t for t in tags if t not in TAGS}
    if bad:
        raise InputError(f"unknown BIO tags {sorted(bad)}")


@dataclass(frozen=True)
class _Counts:
    matched: int
    n_pred: int
    n_gold: int
    same_tags: int
    n_tags: int


def _counts(pred: TagSequence, gold: TagSequence) -> _Counts:
    if len(pred) != len(gold):
        raise InputError(f"tag sequences differ in length: {len(pred)} predicted vs {len(gold)} gold")
    pred_spans, gold_spans = decode_bio(pred), decode_bio(gold)
    matched = sum(1 for s in pred_spans if s in gold_spans)
    same = sum(1 for p, g in zip(pred, gold) if p == g)
    return _Counts(matched, len(pred_spans), len(gold_spans), same, len(gold))


def _metrics(c: _Counts) -> TagMetrics:
    precision = c.matched / c.n_pred if c.n_pred else 1.0
    recall = c.matched / c.n_gold if c.n_gold else 1.0
    accuracy = c.same_tags / c.n_tags if c.n_tags else 1.0
    return TagMetrics(harmonic_mean(precision, recall), precision, recall, accuracy)


def tag_metrics(pred: TagSequence, gold: TagSequence) -> TagMetrics:
    """Exact-boundary entity precision/recall/F1 plus token tag accuracy."""
    return _metrics(_counts(pred, gold))


def corpus_tag_metrics(pairs: Iterable[tuple[TagSequence, TagSequence]]) -> TagMetrics:
    """Entity and tag counts pooled over all ``(pred, gold)`` pairs before dividing."""
    totals = [0, 0, 0, 0, 0]
    for pred, gold in pairs:
        c = _counts(pred, gold)
        for k, v in enumerate((c.matched, c.n_pred, c.n_gold, c.same_tags, c.n_tags)):
            totals[k] += v
    return _metrics(_Counts(*totals))


@dataclass(frozen=True)
class ConllSample:
    tokens: tuple[str, ...]
    tags: tuple[str, ...]
    id: str | None = None


def dumps_conll(samples: Iterable[ConllSample]) -> str:
    blocks = []
    for sample in samples:
        lines = []
        if sample.id is not None:
            lines.append(f"# id = {sample.id}\n")
        for token, tag in zip(sample.tokens, sample.tags, strict=True):
            if "\t" in token or "\n" in token or not token:
                raise InputError(f"token {token!r} cannot be written to a CoNLL file")
            lines.append(f"{token}\t{tag}\n")
        blocks.append("".join(lines))
    return "\n".join(blocks)


def loads_conll(text: str, path: str | Path | None = None) -> list[ConllSample]:
    samples = []
    tokens: list[str] = []
    tags: list[str] = []
    sample_id = None

    def flush():
        nonlocal tokens, tags, sample_id
        if tokens or sample_id is not None:
            samples.append(ConllSample(tuple(tokens), tuple(tags), sample_id))
        tokens, tags, sample_id = [], [], None

    for lineno, line in enumerate(text.split("\n"), start=1):
        if not line.strip():
            flush()
            continue
        if line.startswith("# id = ") and not tokens:
            sample_id = line[len("# id = "):]
            continue
        parts = line.split("\t")
        if len(parts) != 2:
            raise ParseError(f"expected 'token<TAB>tag', got {line!r}", path, lineno)
        token, tag = parts
        if tag not in TAGS:
            raise ParseError(f"unknown BIO tag {tag!r}", path, lineno)
        tokens.append(token)
        tags.append(tag)
    flush()
    return samples


def read_conll(path: str | Path) -> list[ConllSample]:
    path = Path(path)
    return loads_conll(path.read_text(encoding="utf-8"), path)


def write_conll(path: str | Path, samples: Iterable[ConllSample]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_conll(samples))
