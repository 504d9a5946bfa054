"""Rank a pool of (system, prompt) annotation candidates against human gold.

Every candidate's per-sample spans are scored with macro-averaged F1_M
against the merged human annotations; the highest-scoring candidate is
selected to annotate the rest of the corpus. Ties are broken by
``(system, prompt)`` in lexicographic order.
"""

from __future__ import annotations

import csv
import io
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, NamedTuple

from targetspan.corpus import SampleRecord, make_record
from targetspan.exceptions import InputError, ValidationError
from targetspan.metrics import AverageReport, MatchMode, avg_f1_m
from targetspan.spans import SpanSet, TokenizedContent, merge_union


class CandidateId(NamedTuple):
    system: str
    prompt: str

    def __str__(self) -> str:
        return f"{self.system}/{self.prompt}"


@dataclass
class CandidatePool:
    candidates: dict[CandidateId, dict[str, SpanSet]]
    gold: dict[str, SpanSet]
    contents: dict[str, TokenizedContent]

    def validate(self) -> None:
        if self.gold.keys() != self.contents.keys():
            raise InputError("gold and contents cover different samples")
        expected = set(self.gold)
        for cid, outputs in self.candidates.items():
            if set(outputs) != expected:
                diff = sorted(set(outputs) ^ expected)
                raise InputError(f"candidate {cid} does not cover the gold samples (differing ids: {diff})")


class RankedEntry(NamedTuple):
    candidate: CandidateId
    f1_m: float
    rec_m: float | None = None
    prec_m: float | None = None


@dataclass(frozen=True)
class RankedCandidates:
    entries: tuple[RankedEntry, ...] = field(default=())

    def __iter__(self):
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i):
        return self.entries[i]


def _sort_key(entry: RankedEntry):
    return (-entry.f1_m, entry.candidate.system, entry.candidate.prompt)


def rank_entries(entries: Iterable[RankedEntry]) -> RankedCandidates:
    entries = list(entries)
    ids = [e.candidate for e in entries]
    if len(set(ids)) != len(ids):
        raise InputError("duplicate candidate ids in pool")
    return RankedCandidates(tuple(sorted(entries, key=_sort_key)))


def rank_scores(scores: Mapping[CandidateId, float] | Iterable[tuple[CandidateId, float]]) -> RankedCandidates:
    """Rank precomputed scores, e.g. a published score table."""
    items = scores.items() if isinstance(scores, Mapping) else scores
    return rank_entries(RankedEntry(CandidateId(*cid), float(score)) for cid, score in items)


def score_candidate(pool: CandidatePool, candidate: CandidateId, mode: MatchMode = MatchMode.STRICT) -> AverageReport:
    outputs = pool.candidates[candidate]
    return avg_f1_m(((pool.gold[s], outputs[s], pool.contents[s]) for s in sorted(pool.gold)), mode)


def rank_pool(pool: CandidatePool, mode: MatchMode = MatchMode.STRICT, jobs: int = 1) -> RankedCandidates:
    if not pool.candidates:
        raise InputError("cannot rank an empty pool")
    if not pool.gold:
        raise InputError("cannot rank a pool without gold samples")
    pool.validate()
    mode = MatchMode(mode)
    ids = list(pool.candidates)
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as executor:
        reports = list(executor.map(lambda cid: score_candidate(pool, cid, mode), ids))
    return rank_entries(RankedEntry(cid, r.f1_m, r.rec_m, r.prec_m) for cid, r in zip(ids, reports))


def select_best(ranked: RankedCandidates) -> CandidateId:
    if not len(ranked):
        raise InputError("cannot select from an empty ranking")
    return ranked[0].candidate


def aggregate_annotations(annotators: Mapping[str, Mapping[str, SpanSet]]) -> dict[str, SpanSet]:
    """Per-sample merge of all annotators' spans."""
    if not annotators:
        raise InputError("need at least one annotator")
    names = sorted(annotators)
    sample_ids = set(annotators[names[0]])
    for name in names[1:]:
        if set(annotators[name]) != sample_ids:
            raise InputError(f"annotator {name!r} and {names[0]!r} cover different samples")
    return {s: merge_union([annotators[a][s] for a in names]) for s in sorted(sample_ids)}


def annotator_vs_pool(annotators: Mapping[str, Mapping[str, SpanSet]],
                      mode: MatchMode = MatchMode.STRICT,
                      contents: Mapping[str, TokenizedContent] | None = None) -> dict[str, AverageReport]:
    """Score each annotator against the merged annotations of all annotators, itself included."""
    gold = aggregate_annotations(annotators)
    if not gold:
        raise InputError("annotators share no samples")
    result = {}
    for name in sorted(annotators):
        result[name] = avg_f1_m(
            ((gold[s], annotators[name][s], contents[s] if contents else None) for s in gold), mode
        )
    return result


# --- file formats -----------------------------------------------------------

RANKING_HEADER = ("system", "prompt", "f1_m", "rec_m", "prec_m")


def _fmt(value: float | None) -> str:
    return "" if value is None else f"{value:.6f}"


def format_ranking_tsv(ranked: RankedCandidates) -> str:
    lines = ["\t".join(RANKING_HEADER)]
    for e in ranked:
        lines.append("\t".join((e.candidate.system, e.candidate.prompt, _fmt(e.f1_m), _fmt(e.rec_m), _fmt(e.prec_m))))
    return "\n".join(lines) + "\n"


def parse_ranking_tsv(text: str) -> RankedCandidates:
    """Read a ranking (or any score table with system/prompt/f1_m columns) and re-rank it."""
    reader = csv.DictReader(io.StringIO(text), delimiter="\t")
    if reader.fieldnames is None or not {"system", "prompt", "f1_m"} <= set(reader.fieldnames):
        raise InputError("ranking table needs 'system', 'prompt' and 'f1_m' columns")

    def opt(v):
        return float(v) if v not in (None, "") else None

    entries = []
    for row in reader:
        try:
            entries.append(RankedEntry(CandidateId(row["system"], row["prompt"]), float(row["f1_m"]),
                                       opt(row.get("rec_m")), opt(row.get("prec_m"))))
        except ValueError as exc:
            raise InputError(f"bad score in row {row}: {exc}") from exc
    return rank_entries(entries)


def candidate_of(record: SampleRecord) -> CandidateId:
    """Candidate encoded in a pool record: explicit 'system'/'prompt' keys, else the source label."""
    system = record.extra.get("system", record.source)
    prompt = record.extra.get("prompt", "")
    return CandidateId(str(system), str(prompt))


def _contents_by_id(records: Iterable[SampleRecord], contents: dict[str, TokenizedContent]) -> None:
    for r in records:
        known = contents.get(r.id)
        if known is None:
            contents[r.id] = r.content
        elif known.text != r.content.text:
            raise ValidationError("text differs between records of the same sample", r.id)


def annotations_from_records(records: Iterable[SampleRecord]) -> tuple[dict[str, dict[str, SpanSet]], dict[str, TokenizedContent]]:
    """Per-annotator spans keyed by sample id, plus the shared contents.

    Records are grouped by ``source``. An annotator with no record for a
    sample is taken to have highlighted nothing in it.
    """
    records = list(records)
    contents: dict[str, TokenizedContent] = {}
    _contents_by_id(records, contents)
    by_annotator: dict[str, dict[str, SpanSet]] = {}
    for r in records:
        by_annotator.setdefault(r.source, {})[r.id] = r.span_set
    filled = {a: {s: spans.get(s, SpanSet()) for s in sorted(contents)} for a, spans in by_annotator.items()}
    return filled, contents


def pool_from_records(gold_records: Iterable[SampleRecord], candidate_records: Iterable[SampleRecord]) -> CandidatePool:
    """Build a pool: gold records are grouped by source (annotator) and merged per sample."""
    annotators, contents = annotations_from_records(gold_records)
    candidate_records = list(candidate_records)
    _contents_by_id(candidate_records, contents)
    gold = aggregate_annotations(annotators) if annotators else {}
    candidates: dict[CandidateId, dict[str, SpanSet]] = {}
    for r in candidate_records:
        outputs = candidates.setdefault(candidate_of(r), {})
        if r.id in outputs:
            raise ValidationError(f"candidate {candidate_of(r)} has two records", r.id)
        outputs[r.id] = r.span_set
    pool = CandidatePool(candidates, gold, {s: contents[s] for s in gold})
    pool.validate()
    return pool


def pool_to_records(pool: CandidatePool) -> list[SampleRecord]:
    """Deterministic record list for a pool's candidate outputs, sorted by candidate then sample."""
    records = []
    for cid in sorted(pool.candidates):
        for sample_id in sorted(pool.candidates[cid]):
            records.append(make_record(
                sample_id, pool.contents[sample_id].text, pool.candidates[cid][sample_id],
                source=str(cid), extra={"system": cid.system, "prompt": cid.prompt},
            ))
    return records
