import json
import logging

import pytest
from hypothesis import given, strategies as st

from targetspan import InputError, ParseError, SpanSet, ValidationError
from targetspan.corpus import (
    SampleRecord,
    dumps_jsonl,
    format_mean_std,
    load_jsonl,
    make_record,
    split,
    stats,
    write_jsonl,
)


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    assert load_jsonl(path) == []


def test_round_trip_preserves_unknown_fields(tmp_path):
    records = [
        SampleRecord("a", "the piano brains attack", ((4, 16),), "A1", {"dataset": "ihc", "label": 1}),
        SampleRecord("b", "naïve ünïcode text", (), "A1"),
    ]
    path = tmp_path / "r.jsonl"
    write_jsonl(path, records)
    loaded = load_jsonl(path)
    assert loaded == records
    assert loaded[0].span_set == SpanSet.of((1, 3))
    raw = path.read_bytes()
    write_jsonl(path, loaded)
    assert path.read_bytes() == raw
    assert raw.endswith(b"\n") and b"\r" not in raw


def test_overlap_after_snapping_names_record(tmp_path):
    path = tmp_path / "bad.jsonl"
    # [0,6) covers "horrible", [7,15) reaches into "horrible" too -> both snap to token 0.
    rec = {"id": "r7", "text": "horrible purple", "spans": [[0, 6], [5, 12]], "source": "x"}
    path.write_text(json.dumps(rec) + "\n")
    with pytest.raises(ValidationError) as info:
        load_jsonl(path)
    assert info.value.record_id == "r7"
    assert info.value.line == 1
    assert "r7" in str(info.value)


@pytest.mark.parametrize("line, error", [
    ("{not json", ParseError),
    ('{"id": "x"}', ParseError),
    ('{"id": "x", "text": "ab", "spans": [[0]]}', ParseError),
    ('{"id": "x", "text": "ab", "spans": [[0, 9]]}', ValidationError),
    ('{"id": "x", "text": "a  b", "spans": [[1, 3]]}', ValidationError),
])
def test_load_errors_carry_line_numbers(tmp_path, line, error):
    path = tmp_path / "f.jsonl"
    path.write_text('{"id": "ok", "text": "fine"}\n' + line + "\n")
    with pytest.raises(error) as info:
        load_jsonl(path)
    assert info.value.line == 2


def test_duplicate_id_and_source(tmp_path):
    path = tmp_path / "dup.jsonl"
    rows = [{"id": "a", "text": "t", "source": "A1"}, {"id": "a", "text": "t", "source": "A2"},
            {"id": "a", "text": "t", "source": "A1"}]
    path.write_text("".join(json.dumps(r) + "\n" for r in rows))
    with pytest.raises(ValidationError) as info:
        load_jsonl(path)
    assert info.value.line == 3


def test_non_nfc_text_offsets():
    text = "cafe\u0301 owners hate"
    record = SampleRecord("x", text, ((0, 5),))
    assert record.span_set == SpanSet.of((0, 1))
    rebuilt = make_record("x", text, SpanSet.of((1, 2)))
    assert text[slice(*rebuilt.spans[0])] == "owners"


@given(st.lists(st.sampled_from(["the piano", "brains of   people", "x"]), max_size=5))
def test_make_record_inverts_span_set(texts):
    for i, text in enumerate(texts):
        n = len(text.split())
        spans = SpanSet.of((0, n))
        record = make_record(str(i), text, spans)
        assert record.span_set == spans


def test_split_sizes():
    ten = list(range(10))
    train, dev, test = split(ten, (0.8, 0.1, 0.1), seed=7)
    assert (len(train), len(dev), len(test)) == (8, 1, 1)
    assert split(ten, (0.8, 0.1, 0.1), seed=7) == (train, dev, test)
    assert sorted(train + dev + test) == ten
    nine = split(list(range(9)), (0.8, 0.1, 0.1), seed=1)
    assert tuple(map(len, nine)) == (7, 1, 1)
    hundred = split(list(range(100)), (0.7, 0.2, 0.1), seed=0)
    assert tuple(map(len, hundred)) == (70, 20, 10)


def test_split_seed_changes_folds():
    data = list(range(50))
    assert split(data, seed=1) != split(data, seed=2)


def test_split_tiny_warns(caplog):
    with caplog.at_level(logging.WARNING):
        folds = split([1, 2], (0.8, 0.1, 0.1), seed=0)
    assert sum(map(len, folds)) == 2
    assert "empty" in caplog.text


@pytest.mark.parametrize("ratios", [(0.8, 0.1), (0.8, 0.2, 0.1), (1.0, 0.0, 0.0), (0.9, -0.1, 0.2)])
def test_split_bad_ratios(ratios):
    with pytest.raises(InputError):
        split(list(range(10)), ratios)


@given(st.lists(st.integers(), max_size=60, unique=True), st.integers(0, 1000))
def test_split_is_partition(items, seed):
    train, dev, test = split(items, (0.8, 0.1, 0.1), seed)
    assert sorted(train + dev + test) == sorted(items)


def test_stats_examples():
    one = stats([SpanSet.of((0, 2))])
    assert (one.tpc_mean, one.tpc_std, one.alt_mean, one.alt_std) == (1.0, 0.0, 2.0, 0.0)
    two = stats([SpanSet.of((0, 2)), SpanSet.of((0, 1), (2, 3), (4, 6))])
    assert (two.tpc_mean, two.tpc_std, two.alt_mean, two.alt_std) == (2.0, 1.0, 1.5, 0.5)
    assert (two.tpc, two.alt) == ("2.0 (1.0)", "1.5 (0.5)")
    assert format_mean_std(1.66, 0.94) == "1.7 (0.9)"
    with pytest.raises(InputError):
        stats([])


def test_stats_alt_per_sample_and_order():
    sets = [SpanSet.of((0, 4)), SpanSet.of((0, 1), (2, 3)), SpanSet()]
    assert stats(sets, pooled_alt=False).alt_mean == pytest.approx(2.5)
    assert stats(sets).alt_mean == pytest.approx(2.0)
    assert stats(sets[::-1]) == stats(sets)


def test_dumps_jsonl_is_one_object_per_line():
    text = dumps_jsonl([SampleRecord("a", "x y", ((0, 1),), "s")])
    assert text == '{"id": "a", "text": "x y", "spans": [[0, 1]], "source": "s"}\n'
