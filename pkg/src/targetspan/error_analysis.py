"""Structural error analysis of span predictions.

A sample fails when its entity-level F1 (exact boundaries) is below 1. Over
the failed samples we report how many contain a boundary error (a predicted
span that overlaps a gold span without matching it) and how the number of
predicted spans compares to the number of gold spans.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

from targetspan.bio import encode_bio, tag_metrics
from targetspan.exceptions import InputError
from targetspan.spans import Span, SpanSet, TokenizedContent


class CountDiscrepancy(str, enum.Enum):
    OVER = "over"
    UNDER = "under"
    EQUAL = "equal"

    def __str__(self) -> str:
        return self.value


def boundary_errors(pred: SpanSet, gold: SpanSet) -> list[tuple[Span, Span]]:
    return [(p, g) for p in pred for g in gold if p.overlaps(g) and p != g]


def count_discrepancy(pred: SpanSet, gold: SpanSet) -> CountDiscrepancy:
    if len(pred) > len(gold):
        return CountDiscrepancy.OVER
    if len(pred) < len(gold):
        return CountDiscrepancy.UNDER
    return CountDiscrepancy.EQUAL


@dataclass(frozen=True)
class SampleDiagnosis:
    index: int
    failed: bool
    f1: float
    boundary_pairs: tuple[tuple[Span, Span], ...]
    discrepancy: CountDiscrepancy
    note: str = ""


@dataclass(frozen=True)
class ErrorReport:
    n_samples: int
    n_failed: int
    boundary_rate: float
    boundary_rate_all: float
    count_over: float
    count_under: float
    count_equal: float
    samples: tuple[SampleDiagnosis, ...] = ()
    # Free text for semantic failure categories (obfuscation, implicit references, label noise).
    notes: str = ""

    @property
    def no_failures(self) -> bool:
        return self.n_failed == 0


def diagnose(index: int, pred: SpanSet, gold: SpanSet, content: TokenizedContent) -> SampleDiagnosis:
    f1 = tag_metrics(encode_bio(content, pred), encode_bio(content, gold)).f1
    return SampleDiagnosis(
        index=index,
        failed=f1 < 1.0,
        f1=f1,
        boundary_pairs=tuple(boundary_errors(pred, gold)),
        discrepancy=count_discrepancy(pred, gold),
    )


def error_report(samples: Sequence[tuple[SpanSet, SpanSet, TokenizedContent]], notes: str = "") -> ErrorReport:
    """Aggregate failure statistics over ``(pred, gold, content)`` triples."""
    if not samples:
        raise InputError("error report needs at least one sample")
    diagnoses = tuple(diagnose(i, p, g, c) for i, (p, g, c) in enumerate(samples))
    failed = [d for d in diagnoses if d.failed]
    with_boundary = sum(1 for d in failed if d.boundary_pairs)
    n = len(failed)

    def share(kind: CountDiscrepancy) -> float:
        return sum(1 for d in failed if d.discrepancy is kind) / n if n else 0.0

    return ErrorReport(
        n_samples=len(diagnoses),
        n_failed=n,
        boundary_rate=with_boundary / n if n else 0.0,
        boundary_rate_all=with_boundary / len(diagnoses),
        count_over=share(CountDiscrepancy.OVER),
        count_under=share(CountDiscrepancy.UNDER),
        count_equal=share(CountDiscrepancy.EQUAL),
        samples=diagnoses,
        notes=notes,
    )
