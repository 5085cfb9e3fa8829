import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import conlleval_counts, conlleval_spans, random_bio_fixture
from xldistill.data import default_scheme
from xldistill.errors import DataError
from xldistill.evaluation import (
    EntitySpan,
    entity_f1,
    extract_spans,
    score_prediction_file,
)

SCHEME = default_scheme()


def spans(*triples):
    return [EntitySpan(*t) for t in triples]


def test_extract_spans_well_formed():
    assert extract_spans(["B-PER", "I-PER", "O", "B-LOC"]) == spans(
        (0, 2, "PER"), (3, 4, "LOC")
    )


def test_extract_spans_orphan_i_starts_chunk():
    tags = ["O", "I-LOC", "I-LOC"]
    expected = [EntitySpan(*s) for s in conlleval_spans(tags)]
    assert expected == spans((1, 3, "LOC"))
    assert extract_spans(tags) == expected


def test_extract_spans_type_change_splits():
    tags = ["B-PER", "I-ORG"]
    expected = [EntitySpan(*s) for s in conlleval_spans(tags)]
    assert expected == spans((0, 1, "PER"), (1, 2, "ORG"))
    assert extract_spans(tags) == expected


def test_extract_spans_back_to_back_b():
    assert extract_spans(["B-LOC", "B-LOC"]) == spans((0, 1, "LOC"), (1, 2, "LOC"))


@settings(max_examples=150, deadline=None)
@given(st.lists(st.sampled_from(SCHEME.tags), max_size=14))
def test_extract_spans_matches_conlleval_oracle(tags):
    assert [(s.start, s.end, s.type) for s in extract_spans(tags)] == conlleval_spans(tags)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.sampled_from(SCHEME.tags), max_size=14))
def test_spans_disjoint_and_ordered(tags):
    result = extract_spans(tags)
    for span in result:
        assert 0 <= span.start < span.end <= len(tags)
    for a, b in zip(result, result[1:]):
        assert a.end <= b.start


def test_entity_f1_perfect():
    gold = [["B-PER", "I-PER", "O"], ["B-LOC", "O", "B-ORG"]]
    result = entity_f1(gold, gold)
    assert result.overall.gold == 3
    assert (result.precision, result.recall, result.f1) == (1.0, 1.0, 1.0)


def test_entity_f1_half():
    gold = [["B-PER", "O", "B-LOC"]]
    pred = [["B-PER", "O", "B-ORG"]]
    result = entity_f1(pred, gold)
    assert (result.overall.predicted, result.overall.correct, result.overall.gold) == (2, 1, 2)
    assert result.precision == 0.5 and result.recall == 0.5 and result.f1 == 0.5


def test_entity_f1_no_predictions_convention():
    result = entity_f1([["O", "O"]], [["B-PER", "O"]])
    assert result.precision == 0.0 and result.recall == 0.0 and result.f1 == 0.0


def test_entity_f1_boundary_error_is_wrong():
    result = entity_f1([["B-PER", "I-PER", "O"]], [["B-PER", "O", "O"]])
    assert result.overall.correct == 0


def test_entity_f1_rejects_length_mismatch():
    with pytest.raises(DataError):
        entity_f1([["O"]], [["O", "O"]])
    with pytest.raises(DataError):
        entity_f1([["O"]], [["O"], ["O"]])


def test_per_type_counts_sum_to_overall():
    rng = random.Random(0)
    gold = random_bio_fixture(rng, list(SCHEME.tags), 8, 10)
    pred = [[rng.choice(SCHEME.tags) for _ in s] for s in gold]
    result = entity_f1(pred, gold)
    assert result.overall.predicted == sum(c.predicted for c in result.per_type.values())
    assert result.overall.correct == sum(c.correct for c in result.per_type.values())
    assert result.overall.gold == sum(c.gold for c in result.per_type.values())
    assert result.overall.correct <= min(result.overall.predicted, result.overall.gold)


def test_counts_match_conlleval_oracle_on_random_fixtures():
    rng = random.Random(7)
    for _ in range(20):
        gold = random_bio_fixture(rng, list(SCHEME.tags))
        pred = [[rng.choice(SCHEME.tags) for _ in s] for s in gold]
        result = entity_f1(pred, gold)
        expected = conlleval_counts(pred, gold)
        got = (result.overall.predicted, result.overall.correct, result.overall.gold)
        assert got == expected


def test_report_lists_types():
    result = entity_f1([["B-PER", "O", "B-LOC"]], [["B-PER", "O", "B-LOC"]])
    report = result.report()
    assert "overall" in report and "PER" in report and "LOC" in report


def test_score_prediction_file(tmp_path):
    gold = tmp_path / "gold.conll"
    pred = tmp_path / "pred.conll"
    gold.write_text("Anna B-PER\nvisited O\nBergen B-LOC\n\n", encoding="utf-8")
    pred.write_text("Anna B-PER\nvisited O\nBergen B-ORG\n\n", encoding="utf-8")
    result = score_prediction_file(pred, gold, SCHEME)
    assert result.overall.correct == 1 and result.overall.gold == 2


def test_score_prediction_file_token_mismatch(tmp_path):
    gold = tmp_path / "gold.conll"
    pred = tmp_path / "pred.conll"
    gold.write_text("Anna B-PER\n\n", encoding="utf-8")
    pred.write_text("Bob B-PER\n\n", encoding="utf-8")
    with pytest.raises(DataError):
        score_prediction_file(pred, gold, SCHEME)
