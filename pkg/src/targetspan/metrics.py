"""Partial-match span scores: PM recall/precision and the F1_M family.

A gold span earns recall credit from output spans nested inside it, in
proportion to the tokens they cover; an output span earns precision credit
from gold spans nested inside it. Spans that straddle a boundary earn
nothing. Two modes are available:

``strict``
    literal nesting rule above (default).
``coverage``
    additionally gives full credit to a span that is itself nested inside a
    span on the other side, so an output strictly inside a gold span has
    precision 1.

Degenerate cardinalities: an empty gold set has recall 1, an empty output set
has precision 1.
"""

from __future__ import annotations

import enum
import math
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from typing import Iterable, Sequence

from targetspan.exceptions import InputError
from targetspan.spans import Span, SpanSet, TokenizedContent, validate_span_set


class MatchMode(str, enum.Enum):
    STRICT = "strict"
    COVERAGE = "coverage"

    def __str__(self) -> str:
        return self.value


@dataclass(frozen=True)
class MatchReport:
    per_gold: tuple[tuple[Span, float], ...]
    per_output: tuple[tuple[Span, float], ...]
    rec_m: float
    prec_m: float
    f1_m: float
    mode: MatchMode


@dataclass(frozen=True)
class AverageReport:
    """Corpus-level scores: macro (mean of per-sample values) or micro (pooled)."""

    f1_m: float
    rec_m: float
    prec_m: float
    n_samples: int
    mode: MatchMode
    average: str = "macro"


def harmonic_mean(p: float, r: float) -> float:
    if p + r == 0:
        return 0.0
    return 2 * p * r / (p + r)


def _partial_match(target: Span, others: SpanSet, starts: Sequence[int], mode: MatchMode) -> float:
    # Credit for ``target`` from the disjoint, sorted spans in ``others``.
    if target in others:
        return 1.0
    if mode is MatchMode.COVERAGE:
        i = bisect_right(starts, target.start) - 1
        if i >= 0 and others.spans[i].end >= target.end:
            return 1.0
    covered = 0
    i = bisect_left(starts, target.start)
    spans = others.spans
    while i < len(spans) and spans[i].start < target.end:
        if spans[i].end <= target.end:
            covered += len(spans[i])
        i += 1
    return covered / len(target)


def _starts(spans: SpanSet) -> list[int]:
    return [s.start for s in spans]


def pm_recall(gold_span: Span, outputs: SpanSet, content: TokenizedContent | None = None,
              mode: MatchMode = MatchMode.STRICT) -> float:
    """Share of ``gold_span`` covered by output spans nested inside it."""
    mode = MatchMode(mode)
    if content is not None:
        validate_span_set(content, [gold_span])
        validate_span_set(content, outputs)
    return _partial_match(gold_span, outputs, _starts(outputs), mode)


def pm_precision(output_span: Span, golds: SpanSet, content: TokenizedContent | None = None,
                 mode: MatchMode = MatchMode.STRICT) -> float:
    """Share of ``output_span`` covered by gold spans nested inside it."""
    mode = MatchMode(mode)
    if content is not None:
        validate_span_set(content, [output_span])
        validate_span_set(content, golds)
    return _partial_match(output_span, golds, _starts(golds), mode)


def f1_m(gold: SpanSet, output: SpanSet, content: TokenizedContent | None = None,
         mode: MatchMode = MatchMode.STRICT) -> MatchReport:
    mode = MatchMode(mode)
    if content is not None:
        validate_span_set(content, gold)
        validate_span_set(content, output)
    out_starts = _starts(output)
    gold_starts = _starts(gold)
    per_gold = tuple((g, _partial_match(g, output, out_starts, mode)) for g in gold)
    per_output = tuple((o, _partial_match(o, gold, gold_starts, mode)) for o in output)
    rec = _mean([s for _, s in per_gold])
    prec = _mean([s for _, s in per_output])
    return MatchReport(per_gold, per_output, rec, prec, harmonic_mean(prec, rec), mode)


def _mean(values: Sequence[float]) -> float:
    return math.fsum(values) / len(values) if values else 1.0


Sample = tuple[SpanSet, SpanSet, TokenizedContent | None]


def avg_f1_m(samples: Iterable[Sample], mode: MatchMode = MatchMode.STRICT) -> AverageReport:
    """Macro average: mean of per-sample F1_M, Rec_M and Prec_M."""
    reports = [f1_m(g, o, c, mode) for g, o, c in samples]
    return average_reports(reports, MatchMode(mode))


def average_reports(reports: Sequence[MatchReport], mode: MatchMode) -> AverageReport:
    if not reports:
        raise InputError("cannot average F1_M over an empty sample list")
    n = len(reports)
    return AverageReport(
        f1_m=math.fsum(r.f1_m for r in reports) / n,
        rec_m=math.fsum(r.rec_m for r in reports) / n,
        prec_m=math.fsum(r.prec_m for r in reports) / n,
        n_samples=n,
        mode=mode,
    )


def micro_f1_m(samples: Iterable[Sample], mode: MatchMode = MatchMode.STRICT) -> AverageReport:
    """Pool partial-match credit over the corpus before dividing."""
    reports = [f1_m(g, o, c, mode) for g, o, c in samples]
    return pool_reports(reports, MatchMode(mode))


def pool_reports(reports: Sequence[MatchReport], mode: MatchMode) -> AverageReport:
    if not reports:
        raise InputError("cannot average F1_M over an empty sample list")
    rec = _mean([s for r in reports for _, s in r.per_gold])
    prec = _mean([s for r in reports for _, s in r.per_output])
    return AverageReport(harmonic_mean(prec, rec), rec, prec, len(reports), mode, "micro")
