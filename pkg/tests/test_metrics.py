import math
import random

import pytest
from hypothesis import given, settings, strategies as st

from oracles import oracle_f1m, random_disjoint_pairs
from targetspan import InputError, MatchMode, Span, SpanSet, avg_f1_m, f1_m, pm_precision, pm_recall, tokenize
from targetspan.metrics import micro_f1_m

STRICT, COVERAGE = MatchMode.STRICT, MatchMode.COVERAGE
PURPLE = tokenize("the horrible purple person left")
SIX = tokenize("a b c d e f")


@pytest.mark.parametrize("mode", [STRICT, COVERAGE])
def test_pm_recall_exact(mode):
    assert pm_recall(Span(1, 4), SpanSet.of((1, 4)), PURPLE, mode) == 1.0


@pytest.mark.parametrize("mode", [STRICT, COVERAGE])
def test_pm_recall_nested_output(mode):
    assert pm_recall(Span(1, 4), SpanSet.of((2, 4)), PURPLE, mode) == pytest.approx(2 / 3, abs=1e-12)


def test_pm_recall_englobing_output():
    assert pm_recall(Span(2, 4), SpanSet.of((1, 5)), PURPLE, STRICT) == 0.0
    assert pm_recall(Span(2, 4), SpanSet.of((1, 5)), PURPLE, COVERAGE) == 1.0


@pytest.mark.parametrize("mode", [STRICT, COVERAGE])
def test_pm_recall_straddling_output_gets_nothing(mode):
    assert pm_recall(Span(1, 4), SpanSet.of((3, 5)), PURPLE, mode) == 0.0


def test_pm_recall_sums_nested_witnesses():
    assert pm_recall(Span(0, 6), SpanSet.of((0, 2), (3, 4)), SIX) == pytest.approx(0.5, abs=1e-12)


def test_pm_precision_examples():
    assert pm_precision(Span(1, 4), SpanSet.of((1, 4)), PURPLE) == 1.0
    assert pm_precision(Span(2, 4), SpanSet.of((1, 4)), PURPLE, STRICT) == 0.0
    assert pm_precision(Span(2, 4), SpanSet.of((1, 4)), PURPLE, COVERAGE) == 1.0
    for mode in (STRICT, COVERAGE):
        assert pm_precision(Span(0, 4), SpanSet.of((1, 2), (3, 4)), PURPLE, mode) == pytest.approx(0.5, abs=1e-12)


def test_f1_m_purple():
    cov = f1_m(SpanSet.of((1, 4)), SpanSet.of((2, 4)), PURPLE, COVERAGE)
    assert (cov.rec_m, cov.prec_m) == (pytest.approx(2 / 3, abs=1e-12), 1.0)
    assert cov.f1_m == pytest.approx(0.8, abs=1e-12)
    assert cov.mode is COVERAGE
    strict = f1_m(SpanSet.of((1, 4)), SpanSet.of((2, 4)), PURPLE, STRICT)
    assert (strict.rec_m, strict.prec_m, strict.f1_m) == (pytest.approx(2 / 3, abs=1e-12), 0.0, 0.0)
    assert strict.mode is STRICT


@pytest.mark.parametrize("mode", [STRICT, COVERAGE])
def test_f1_m_degenerate(mode):
    empty = SpanSet()
    some = SpanSet.of((1, 2))
    both_empty = f1_m(empty, empty, PURPLE, mode)
    assert (both_empty.rec_m, both_empty.prec_m, both_empty.f1_m) == (1.0, 1.0, 1.0)
    claims = f1_m(empty, some, PURPLE, mode)
    assert (claims.rec_m, claims.prec_m, claims.f1_m) == (1.0, 0.0, 0.0)
    misses = f1_m(some, empty, PURPLE, mode)
    assert (misses.rec_m, misses.prec_m, misses.f1_m) == (0.0, 1.0, 0.0)


def test_f1_m_accepts_string_mode_and_reports_details():
    report = f1_m(SpanSet.of((0, 2), (3, 5)), SpanSet.of((0, 2)), PURPLE, "strict")
    assert report.per_gold == ((Span(0, 2), 1.0), (Span(3, 5), 0.0))
    assert report.per_output == ((Span(0, 2), 1.0),)
    assert report.rec_m == 0.5 and report.prec_m == 1.0


def test_f1_m_repeated_words_do_not_cross_match():
    content = tokenize("people hate people")
    report = f1_m(SpanSet.of((0, 1)), SpanSet.of((2, 3)), content)
    assert report.f1_m == 0.0


def test_avg_f1_m():
    exact = [(SpanSet.of((1, 4)), SpanSet.of((1, 4)), PURPLE)] * 3
    assert avg_f1_m(exact).f1_m == 1.0
    mixed = [
        (SpanSet.of((1, 4)), SpanSet.of((2, 4)), PURPLE),  # 0.8 under coverage
        (SpanSet.of((1, 4)), SpanSet.of((0, 1)), PURPLE),  # 0.0
    ]
    avg = avg_f1_m(mixed, COVERAGE)
    assert avg.f1_m == pytest.approx(0.4, abs=1e-12)
    assert avg.rec_m == pytest.approx(1 / 3, abs=1e-12)
    assert avg.prec_m == pytest.approx(0.5, abs=1e-12)
    assert avg.n_samples == 2 and avg.average == "macro"
    with pytest.raises(InputError):
        avg_f1_m([])


def test_micro_pools_credit():
    samples = [
        (SpanSet.of((1, 4)), SpanSet.of((1, 4)), PURPLE),
        (SpanSet.of((0, 1), (2, 3)), SpanSet(), PURPLE),
    ]
    micro = micro_f1_m(samples)
    assert micro.rec_m == pytest.approx(1 / 3, abs=1e-12)
    assert micro.prec_m == 1.0
    assert micro.f1_m == pytest.approx(0.5, abs=1e-12)
    assert micro.average == "micro"


@st.composite
def instances(draw):
    n = draw(st.integers(1, 12))
    rng = random.Random(draw(st.integers(0, 2**32)))
    return n, random_disjoint_pairs(rng, n), random_disjoint_pairs(rng, n)


@settings(max_examples=300)
@given(instances(), st.sampled_from([STRICT, COVERAGE]))
def test_matches_oracle(instance, mode):
    n, gold, out = instance
    report = f1_m(SpanSet(tuple(gold)), SpanSet(tuple(out)), None, mode)
    expected = oracle_f1m(gold, out, mode is COVERAGE)
    assert math.isclose(report.rec_m, expected[0], abs_tol=1e-12)
    assert math.isclose(report.prec_m, expected[1], abs_tol=1e-12)
    assert math.isclose(report.f1_m, expected[2], abs_tol=1e-12)


@settings(max_examples=300)
@given(instances(), st.sampled_from([STRICT, COVERAGE]))
def test_bounds_symmetry_and_identity(instance, mode):
    n, gold_pairs, out_pairs = instance
    gold, out = SpanSet(tuple(gold_pairs)), SpanSet(tuple(out_pairs))
    forward = f1_m(gold, out, None, mode)
    backward = f1_m(out, gold, None, mode)
    for v in (forward.rec_m, forward.prec_m, forward.f1_m):
        assert 0.0 <= v <= 1.0
    assert (forward.rec_m, forward.prec_m) == (backward.prec_m, backward.rec_m)
    assert forward.f1_m == pytest.approx(backward.f1_m, abs=1e-15)
    # Harmonic mean vanishes as soon as either side does.
    assert (forward.f1_m == 0) == (forward.rec_m == 0 or forward.prec_m == 0)
    assert f1_m(gold, gold, None, mode).f1_m == 1.0


@settings(max_examples=300)
@given(instances())
def test_deleting_zero_scoring_output_span(instance):
    n, gold_pairs, out_pairs = instance
    gold, out = SpanSet(tuple(gold_pairs)), SpanSet(tuple(out_pairs))
    report = f1_m(gold, out)
    for span, score in report.per_output:
        feeds_recall = any(g.contains(span) for g in gold)
        if score == 0.0 and not feeds_recall:
            reduced = f1_m(gold, SpanSet(tuple(s for s in out if s != span)))
            assert reduced.rec_m == report.rec_m
            assert reduced.prec_m >= report.prec_m
