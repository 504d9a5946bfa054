"""Evaluation and dataset-construction toolkit for target span identification."""

from targetspan.exceptions import (
    InputError,
    ParseError,
    SpanBoundsError,
    SpanOverlapError,
    TargetSpanError,
    ValidationError,
)
from targetspan.metrics import AverageReport, MatchMode, MatchReport, avg_f1_m, f1_m, pm_precision, pm_recall
from targetspan.spans import (
    Span,
    SpanSet,
    Token,
    TokenizedContent,
    char_span_to_token_span,
    merge_union,
    span_tokens,
    tokenize,
    validate_span_set,
)

__version__ = "0.1.0"

__all__ = [
    "AverageReport",
    "InputError",
    "MatchMode",
    "MatchReport",
    "ParseError",
    "Span",
    "SpanBoundsError",
    "SpanOverlapError",
    "SpanSet",
    "TargetSpanError",
    "Token",
    "TokenizedContent",
    "ValidationError",
    "avg_f1_m",
    "char_span_to_token_span",
    "f1_m",
    "merge_union",
    "pm_precision",
    "pm_recall",
    "span_tokens",
    "tokenize",
    "validate_span_set",
]
