"""Token sequences, half-open token spans, and span-set algebra.

Everything downstream (metrics, agreement, BIO tagging, pooling) works on
:class:`SpanSet` values over a :class:`TokenizedContent`. Spans index tokens,
not characters; character offsets only appear at file boundaries and are
snapped to tokens with :func:`char_span_to_token_span`.

All values here are immutable and every function is pure.
"""

from __future__ import annotations

import re
import unicodedata
from bisect import bisect_left, bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, NamedTuple, Sequence

from targetspan.exceptions import SpanBoundsError, SpanOverlapError

_TOKEN_RE = re.compile(r"\S+")


class Token(NamedTuple):
    surface: str
    char_start: int
    char_end: int


@dataclass(frozen=True)
class TokenizedContent:
    """Source text together with its tokens and their character offsets."""

    text: str
    tokens: tuple[Token, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(Token(*t) for t in self.tokens))
        prev_end = 0
        for tok in self.tokens:
            if tok.char_start < prev_end or tok.char_start >= tok.char_end:
                raise ValueError(f"token {tok} is empty or out of order")
            if self.text[tok.char_start:tok.char_end] != tok.surface:
                raise ValueError(f"token {tok} does not match its text slice")
            if any(ch.isspace() for ch in tok.surface):
                raise ValueError(f"token {tok} contains whitespace")
            prev_end = tok.char_end

    def __len__(self) -> int:
        return len(self.tokens)

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]

    @cached_property
    def _starts(self) -> list[int]:
        return [t.char_start for t in self.tokens]

    @cached_property
    def _ends(self) -> list[int]:
        return [t.char_end for t in self.tokens]


@dataclass(frozen=True, order=True)
class Span:
    """Half-open token interval ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self):
        if not (isinstance(self.start, int) and isinstance(self.end, int)):
            raise TypeError(f"span bounds must be ints, got ({self.start!r}, {self.end!r})")
        if self.start < 0 or self.start >= self.end:
            raise SpanBoundsError(f"invalid span ({self.start}, {self.end}): need 0 <= start < end")

    def __len__(self) -> int:
        return self.end - self.start

    def __repr__(self) -> str:
        return f"Span({self.start}, {self.end})"

    @property
    def indices(self) -> range:
        return range(self.start, self.end)

    def overlaps(self, other: Span) -> bool:
        return self.start < other.end and other.start < self.end

    def contains(self, other: Span) -> bool:
        """True when ``other`` lies entirely inside this span (equality included)."""
        return self.start <= other.start and other.end <= self.end


@dataclass(frozen=True)
class SpanSet:
    """Sorted collection of pairwise non-overlapping spans.

    The constructor sorts its input; overlapping input raises
    :class:`SpanOverlapError`. Bounds against a particular content are checked
    by :func:`validate_span_set`.
    """

    spans: tuple[Span, ...] = field(default=())

    def __post_init__(self):
        ordered = tuple(sorted(_as_span(s) for s in self.spans))
        for a, b in zip(ordered, ordered[1:]):
            if a.end > b.start:
                raise SpanOverlapError(a, b)
        object.__setattr__(self, "spans", ordered)

    @classmethod
    def of(cls, *pairs: tuple[int, int] | Span) -> SpanSet:
        return cls(tuple(pairs))

    def __iter__(self) -> Iterator[Span]:
        return iter(self.spans)

    def __len__(self) -> int:
        return len(self.spans)

    def __contains__(self, span: object) -> bool:
        return span in self._lookup

    def __repr__(self) -> str:
        inner = ", ".join(f"({s.start}, {s.end})" for s in self.spans)
        return f"SpanSet({{{inner}}})"

    @cached_property
    def _lookup(self) -> frozenset[Span]:
        return frozenset(self.spans)

    def token_indices(self) -> frozenset[int]:
        return frozenset(i for s in self.spans for i in s.indices)

    def as_pairs(self) -> list[tuple[int, int]]:
        return [(s.start, s.end) for s in self.spans]


def _as_span(value) -> Span:
    if isinstance(value, Span):
        return value
    start, end = value
    return Span(start, end)


def tokenize(text: str) -> TokenizedContent:
    """NFC-normalize ``text`` and split it into maximal non-whitespace runs.

    >>> [t.surface for t in tokenize("piano  brains").tokens]
    ['piano', 'brains']
    """
    normalized = unicodedata.normalize("NFC", text)
    tokens = tuple(Token(m.group(), m.start(), m.end()) for m in _TOKEN_RE.finditer(normalized))
    return TokenizedContent(normalized, tokens)


def char_span_to_token_span(content: TokenizedContent, char_start: int, char_end: int) -> Span | None:
    """Smallest token span covering every token that intersects ``[char_start, char_end)``.

    Returns None when the range only covers whitespace.
    """
    if not 0 <= char_start < char_end <= len(content.text):
        raise SpanBoundsError(
            f"character range [{char_start}, {char_end}) outside text of length {len(content.text)}"
        )
    first = bisect_right(content._ends, char_start)
    last = bisect_left(content._starts, char_end) - 1
    if first > last:
        return None
    return Span(first, last + 1)


def token_span_to_char_span(content: TokenizedContent, span: Span) -> tuple[int, int]:
    _check_bounds(content, span)
    return content.tokens[span.start].char_start, content.tokens[span.end - 1].char_end


def validate_span_set(content: TokenizedContent, raw: Iterable[Span | tuple[int, int]]) -> SpanSet:
    """Sort ``raw`` and check it is in bounds and pairwise disjoint."""
    spans = [_as_span(s) for s in raw]
    for span in spans:
        _check_bounds(content, span)
    return SpanSet(tuple(spans))


def merge_union(sets: Sequence[SpanSet]) -> SpanSet:
    """Union of several annotators' span sets.

    Spans that share at least one token are replaced, transitively, by the
    single span covering all of them. Spans that merely touch
    (``a.end == b.start``) stay separate.
    """
    pooled = sorted(span for spans in sets for span in spans)
    merged: list[Span] = []
    for span in pooled:
        if merged and span.start < merged[-1].end:
            last = merged[-1]
            if span.end > last.end:
                merged[-1] = Span(last.start, span.end)
        else:
            merged.append(span)
    return SpanSet(tuple(merged))


def span_tokens(content: TokenizedContent, span: Span) -> list[str]:
    _check_bounds(content, span)
    return [t.surface for t in content.tokens[span.start:span.end]]


def span_text(content: TokenizedContent, span: Span) -> str:
    start, end = token_span_to_char_span(content, span)
    return content.text[start:end]


def _check_bounds(content: TokenizedContent, span: Span) -> None:
    if span.end > len(content):
        raise SpanBoundsError(f"{span!r} exceeds content of {len(content)} tokens")
