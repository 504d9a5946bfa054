"""JSONL sample records, train/dev/test splitting and corpus statistics.

One record per line::

    {"id": "ihc-17", "text": "...", "spans": [[4, 17], [30, 36]], "source": "A1"}

``spans`` are character offsets ``[start, end)`` into ``text``. They are
snapped to whitespace tokens on load; any other keys are carried through
unchanged. ``(id, source)`` must be unique within a file, so one file can
hold several annotators' (or systems') versions of the same sample.
"""

from __future__ import annotations

import json
import logging
import math
import random
import statistics
import unicodedata
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Iterable, Sequence

from targetspan.exceptions import InputError, ParseError, SpanOverlapError, ValidationError
from targetspan.spans import (
    SpanSet,
    TokenizedContent,
    char_span_to_token_span,
    token_span_to_char_span,
    tokenize,
)

logger = logging.getLogger(__name__)

_CORE_KEYS = ("id", "text", "spans", "source")


@dataclass(frozen=True)
class SampleRecord:
    id: str
    text: str
    spans: tuple[tuple[int, int], ...] = ()
    source: str = ""
    extra: dict[str, Any] = field(default_factory=dict, compare=True)

    def __post_init__(self):
        object.__setattr__(self, "spans", tuple((int(s), int(e)) for s, e in self.spans))

    @cached_property
    def content(self) -> TokenizedContent:
        return tokenize(self.text)

    @cached_property
    def span_set(self) -> SpanSet:
        """Token spans of this record; raises ValidationError on bad offsets."""
        content = self.content
        offsets = _OffsetMap(self.text)
        snapped = []
        for start, end in self.spans:
            if not 0 <= start < end <= len(self.text):
                raise ValidationError(
                    f"character span [{start}, {end}) outside text of length {len(self.text)}", self.id
                )
            span = char_span_to_token_span(content, offsets.to_normalized(start), offsets.to_normalized(end))
            if span is None:
                raise ValidationError(f"character span [{start}, {end}) covers no token", self.id)
            snapped.append(span)
        try:
            return SpanSet(tuple(snapped))
        except SpanOverlapError as exc:
            raise ValidationError(f"spans overlap after token snapping: {exc}", self.id) from exc

    def to_dict(self) -> dict[str, Any]:
        data: dict[str, Any] = {
            "id": self.id,
            "text": self.text,
            "spans": [[s, e] for s, e in self.spans],
            "source": self.source,
        }
        data.update(self.extra)
        return data

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> SampleRecord:
        if not isinstance(data, dict):
            raise TypeError("record must be a JSON object")
        sample_id, text = data.get("id"), data.get("text")
        if not isinstance(sample_id, str) or not isinstance(text, str):
            raise TypeError("record needs string fields 'id' and 'text'")
        spans = data.get("spans", [])
        if not isinstance(spans, list) or not all(
            isinstance(s, list) and len(s) == 2 and all(isinstance(v, int) and not isinstance(v, bool) for v in s)
            for s in spans
        ):
            raise TypeError("'spans' must be a list of [start, end] integer pairs")
        source = data.get("source", "")
        if not isinstance(source, str):
            raise TypeError("'source' must be a string")
        extra = {k: v for k, v in data.items() if k not in _CORE_KEYS}
        return cls(sample_id, text, tuple(tuple(s) for s in spans), source, extra)


class _OffsetMap:
    """Translate character offsets between raw text and its NFC form."""

    def __init__(self, text: str):
        self.text = text
        self.identity = unicodedata.is_normalized("NFC", text)

    def to_normalized(self, offset: int) -> int:
        if self.identity:
            return offset
        return len(unicodedata.normalize("NFC", self.text[:offset]))

    def to_raw(self, offset: int) -> int:
        if self.identity:
            return offset
        for k in range(len(self.text) + 1):
            if len(unicodedata.normalize("NFC", self.text[:k])) >= offset:
                return k
        return len(self.text)


def make_record(sample_id: str, text: str, spans: SpanSet, source: str = "",
                extra: dict[str, Any] | None = None) -> SampleRecord:
    """Serialize token spans over ``text`` back to character offsets."""
    content = tokenize(text)
    offsets = _OffsetMap(text)
    chars = []
    for span in spans:
        start, end = token_span_to_char_span(content, span)
        chars.append((offsets.to_raw(start), offsets.to_raw(end)))
    return SampleRecord(sample_id, text, tuple(chars), source, dict(extra or {}))


def validate_record(record: SampleRecord) -> SpanSet:
    return record.span_set


def load_jsonl(path: str | Path) -> list[SampleRecord]:
    """Read and validate every record in ``path``. Blank lines are skipped."""
    path = Path(path)
    records = []
    seen: dict[tuple[str, str], int] = {}
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = SampleRecord.from_dict(json.loads(line))
            except (json.JSONDecodeError, TypeError) as exc:
                raise ParseError(str(exc), path, lineno) from exc
            try:
                record.span_set
            except ValidationError as exc:
                raise ValidationError(exc.message, record.id, path, lineno) from exc
            key = (record.id, record.source)
            if key in seen:
                raise ValidationError(
                    f"duplicate (id, source) pair, first seen on line {seen[key]}", record.id, path, lineno
                )
            seen[key] = lineno
            records.append(record)
    return records


def dumps_jsonl(records: Iterable[SampleRecord]) -> str:
    return "".join(json.dumps(r.to_dict(), ensure_ascii=False) + "\n" for r in records)


def write_jsonl(path: str | Path, records: Iterable[SampleRecord]) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(dumps_jsonl(records))


def group_by_source(records: Iterable[SampleRecord]) -> dict[str, dict[str, SampleRecord]]:
    grouped: dict[str, dict[str, SampleRecord]] = {}
    for record in records:
        grouped.setdefault(record.source, {})[record.id] = record
    return grouped


def split(samples: Sequence, ratios: tuple[float, float, float] = (0.8, 0.1, 0.1),
          seed: int = 0) -> tuple[list, list, list]:
    """Shuffle ``samples`` with ``seed`` and cut them into train/dev/test.

    Dev and test get ``floor(n * ratio)`` items each, raised to one item when
    that floor is zero and the train fold can spare it; train takes the rest.
    Each fold keeps the input order of its members.
    """
    if len(ratios) != 3 or any(r <= 0 for r in ratios):
        raise InputError(f"ratios must be three positive numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise InputError(f"ratios must sum to 1, got {sum(ratios)}")
    n = len(samples)
    sizes = []
    for name, ratio in zip(("dev", "test"), ratios[1:]):
        size = math.floor(n * ratio + 1e-9)
        if size == 0:
            if n - sum(sizes) - 1 >= 1:
                size = 1
            else:
                logger.warning("only %d samples: %s fold left empty", n, name)
        sizes.append(size)
    n_dev, n_test = sizes
    order = list(range(n))
    random.Random(seed).shuffle(order)
    dev_idx = sorted(order[:n_dev])
    test_idx = sorted(order[n_dev:n_dev + n_test])
    train_idx = sorted(order[n_dev + n_test:])
    if not train_idx:
        logger.warning("only %d samples: train fold left empty", n)
    return ([samples[i] for i in train_idx], [samples[i] for i in dev_idx], [samples[i] for i in test_idx])


@dataclass(frozen=True)
class CorpusStats:
    n_samples: int
    tpc_mean: float
    tpc_std: float
    alt_mean: float
    alt_std: float

    @property
    def tpc(self) -> str:
        return format_mean_std(self.tpc_mean, self.tpc_std)

    @property
    def alt(self) -> str:
        return format_mean_std(self.alt_mean, self.alt_std)


def format_mean_std(mean: float, std: float, digits: int = 1) -> str:
    """Table-style ``"1.7 (0.9)"`` rendering."""
    return f"{mean:.{digits}f} ({std:.{digits}f})"


def stats(span_sets: Sequence[SpanSet], pooled_alt: bool = True) -> CorpusStats:
    """Targets-per-content and target-length statistics (population std).

    With ``pooled_alt`` (default) target length is averaged over all spans in
    the corpus; otherwise each sample's mean length is averaged over samples
    that have at least one span.
    """
    if not span_sets:
        raise InputError("stats needs at least one sample")
    counts = [len(s) for s in span_sets]
    if pooled_alt:
        lengths = [float(len(span)) for spans in span_sets for span in spans]
    else:
        lengths = [statistics.fmean(len(span) for span in spans) for spans in span_sets if len(spans)]
    alt_mean = statistics.fmean(lengths) if lengths else 0.0
    alt_std = statistics.pstdev(lengths) if lengths else 0.0
    return CorpusStats(
        n_samples=len(span_sets),
        tpc_mean=statistics.fmean(counts),
        tpc_std=statistics.pstdev(counts),
        alt_mean=alt_mean,
        alt_std=alt_std,
    )
