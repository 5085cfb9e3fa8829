import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from xldistill.data import (
    Corpus,
    LabelScheme,
    Sentence,
    default_scheme,
    parse_conll,
    strip_labels,
    validate_bio,
    write_conll,
)
from xldistill.errors import ConllParseError, DataError, UnknownTagError


def test_scheme_tags_structure():
    scheme = LabelScheme(("LOC", "ORG", "PER"))
    assert scheme.tags == ("O", "B-LOC", "I-LOC", "B-ORG", "I-ORG", "B-PER", "I-PER")
    assert scheme.tag_to_index["O"] == 0
    assert sorted(scheme.tag_to_index.values()) == list(range(scheme.n_tags))
    assert all(scheme.index_to_tag(scheme.tag_to_index[t]) == t for t in scheme.tags)


def test_scheme_rejects_duplicates():
    with pytest.raises(DataError):
        LabelScheme(("LOC", "LOC"))


def test_sentence_tag_length_checked():
    with pytest.raises(DataError):
        Sentence(("a", "b"), ("O",))


def test_labeled_corpus_requires_tags():
    with pytest.raises(DataError):
        Corpus((Sentence(("a",), None),), language="src", split="train", labeled=True)


def test_parse_conll_basic(tmp_path, scheme):
    path = tmp_path / "c.conll"
    path.write_text("EU B-ORG\nrejects O\n\n", encoding="utf-8")
    corpus = parse_conll(path, scheme, "src", "train")
    assert len(corpus) == 1
    assert corpus.labeled
    assert corpus.sentences[0].tokens == ("EU", "rejects")
    assert corpus.sentences[0].gold_tags == ("B-ORG", "O")


def test_parse_conll_empty_file(tmp_path, scheme):
    path = tmp_path / "empty.conll"
    path.write_text("", encoding="utf-8")
    corpus = parse_conll(path, scheme, "src", "train")
    assert len(corpus) == 0
    assert not corpus.labeled


def test_parse_conll_unknown_tag(tmp_path, scheme):
    path = tmp_path / "bad.conll"
    path.write_text("foo B-XYZ\n", encoding="utf-8")
    with pytest.raises(UnknownTagError) as err:
        parse_conll(path, scheme, "src", "train")
    assert "B-XYZ" in str(err.value)


def test_parse_conll_reports_line_number(tmp_path, scheme):
    path = tmp_path / "ragged.conll"
    path.write_text("a O\nb O\nc\n", encoding="utf-8")
    with pytest.raises(ConllParseError) as err:
        parse_conll(path, scheme, "src", "train")
    assert err.value.lineno == 3


def test_parse_conll_four_column_variant(tmp_path, scheme):
    path = tmp_path / "four.conll"
    path.write_text("EU NNP I-NP B-ORG\nrejects VBZ I-VP O\n\n", encoding="utf-8")
    corpus = parse_conll(path, scheme, "src", "train")
    assert corpus.sentences[0].gold_tags == ("B-ORG", "O")


def test_parse_conll_unlabeled(tmp_path, scheme):
    path = tmp_path / "plain.conll"
    path.write_text("hello\nworld\n\n", encoding="utf-8")
    corpus = parse_conll(path, scheme, "tgt", "train")
    assert not corpus.labeled
    assert corpus.sentences[0].gold_tags is None


@pytest.mark.parametrize(
    "tags,positions",
    [
        (["B-PER", "I-PER", "O"], []),
        (["O", "I-LOC"], [1]),
        (["B-PER", "I-ORG"], [1]),
        (["I-PER"], [0]),
        (["B-LOC", "I-LOC", "I-LOC", "O", "I-LOC"], [4]),
    ],
)
def test_validate_bio(tags, positions, scheme):
    violations = validate_bio(tags, scheme)
    assert [v.position for v in violations] == positions
    for v in violations:
        assert v.tag.startswith("I-")
        assert v.expected_prefix


_words = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu"), max_codepoint=0x2FF),
    min_size=1,
    max_size=8,
)


@st.composite
def _corpora(draw):
    scheme = default_scheme()
    labeled = draw(st.booleans())
    sentences = []
    for _ in range(draw(st.integers(0, 6))):
        tokens = draw(st.lists(_words, min_size=1, max_size=6))
        tags = (
            tuple(draw(st.sampled_from(scheme.tags)) for _ in tokens) if labeled else None
        )
        sentences.append(Sentence(tuple(tokens), tags))
    return Corpus(tuple(sentences), language="src", split="train", labeled=labeled)


@settings(max_examples=40, deadline=None)
@given(_corpora())
def test_conll_round_trip(tmp_path_factory, corpus):
    path = tmp_path_factory.mktemp("rt") / "c.conll"
    write_conll(corpus, path)
    parsed = parse_conll(path, default_scheme(), corpus.language, corpus.split)
    assert parsed.sentences == corpus.sentences
    if len(corpus) > 0:
        assert parsed.labeled == corpus.labeled


def test_strip_labels(small_corpora):
    source, _ = small_corpora
    stripped = strip_labels(source.dev)
    assert not stripped.labeled
    assert all(s.gold_tags is None for s in stripped.sentences)
    assert [s.tokens for s in stripped.sentences] == [
        s.tokens for s in source.dev.sentences
    ]
