"""Pairwise inter-annotator agreement over highlighted tokens.

Dice works on token positions; the LCS ratio works on token surfaces
concatenated in document order, so a repeated word can match across
positions. Both are normalized as ``2 * overlap / (|A| + |B|)`` and equal 1.0
when neither annotator highlighted anything.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from targetspan.exceptions import InputError
from targetspan.spans import SpanSet, TokenizedContent, span_tokens


@dataclass(frozen=True)
class AgreementReport:
    pair: tuple[str, str]
    dsc: float
    lcs: float
    n_samples: int


def dsc(a: SpanSet, b: SpanSet, content: TokenizedContent | None = None) -> float:
    ta, tb = a.token_indices(), b.token_indices()
    if not ta and not tb:
        return 1.0
    return 2 * len(ta & tb) / (len(ta) + len(tb))


def lcs_length(x: Sequence, y: Sequence) -> int:
    if len(x) < len(y):
        x, y = y, x
    prev = [0] * (len(y) + 1)
    for xi in x:
        cur = [0]
        for j, yj in enumerate(y):
            cur.append(prev[j] + 1 if xi == yj else max(prev[j + 1], cur[j]))
        prev = cur
    return prev[-1]


def highlighted_surfaces(spans: SpanSet, content: TokenizedContent) -> list[str]:
    return [tok for span in spans for tok in span_tokens(content, span)]


def lcs_agreement(a: SpanSet, b: SpanSet, content: TokenizedContent) -> float:
    sa = highlighted_surfaces(a, content)
    sb = highlighted_surfaces(b, content)
    if not sa and not sb:
        return 1.0
    return 2 * lcs_length(sa, sb) / (len(sa) + len(sb))


def pairwise_agreement(annotations: Mapping[str, Mapping[str, SpanSet]],
                       contents: Mapping[str, TokenizedContent]) -> list[AgreementReport]:
    """Mean DSC and LCS agreement for every unordered pair of annotators.

    ``annotations`` maps annotator id to a mapping of sample id to that
    annotator's spans. All annotators must cover exactly the same samples.
    """
    if len(annotations) < 2:
        raise InputError("pairwise agreement needs at least two annotators")
    sample_ids = _shared_samples(annotations)
    missing = sample_ids - contents.keys()
    if missing:
        raise InputError(f"no content for samples {sorted(missing)}")
    ordered = sorted(sample_ids)
    reports = []
    for x, y in itertools.combinations(sorted(annotations), 2):
        dscs = [dsc(annotations[x][s], annotations[y][s]) for s in ordered]
        lcss = [lcs_agreement(annotations[x][s], annotations[y][s], contents[s]) for s in ordered]
        n = len(ordered)
        reports.append(AgreementReport(
            (x, y),
            math.fsum(dscs) / n if n else 1.0,
            math.fsum(lcss) / n if n else 1.0,
            n,
        ))
    return reports


def _shared_samples(per_annotator: Mapping[str, Mapping[str, object]]) -> set[str]:
    names = sorted(per_annotator)
    reference = set(per_annotator[names[0]])
    for name in names[1:]:
        ids = set(per_annotator[name])
        if ids != reference:
            diff = sorted(ids ^ reference)
            raise InputError(
                f"annotator {name!r} and {names[0]!r} cover different samples (differing ids: {diff})"
            )
    return reference
