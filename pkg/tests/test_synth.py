from collections import Counter

import pytest

from xldistill.data import default_scheme, write_conll
from xldistill.errors import ConfigurationError
from xldistill.evaluation import extract_spans
from xldistill.synth import (
    FUNCTION_WORD_MAP,
    decipher_token,
    encipher_token,
    synth_cipher_corpora,
)


def test_same_seed_is_byte_identical(tmp_path):
    for run in ("a", "b"):
        source, target = synth_cipher_corpora(42, 30, 10, 10)
        for pair, side in ((source, "src"), (target, "tgt")):
            for split, corpus in pair.by_split().items():
                write_conll(corpus, tmp_path / run / f"{side}.{split}.conll")
    for name in [p.name for p in (tmp_path / "a").iterdir()]:
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_split_sizes_and_roles():
    source, target = synth_cipher_corpora(3, 100, 20, 30)
    assert len(source.train) == 100 and source.train.labeled
    assert len(target.train) == 100 and not target.train.labeled
    assert all(s.gold_tags is None for s in target.train.sentences)
    assert target.dev.labeled and target.test.labeled
    assert len(source.dev) == len(target.dev) == 20
    assert len(source.test) == len(target.test) == 30
    assert source.train.language == "src" and target.train.language == "tgt"


def test_entity_histogram_matches_after_deciphering():
    source, target = synth_cipher_corpora(9, 50, 10, 40)

    def histogram(corpus):
        counts = Counter()
        for s in corpus.sentences:
            for span in extract_spans(list(s.gold_tags)):
                counts[span.type] += 1
        return counts

    deciphered = [
        [decipher_token(t) for t in s.tokens] for s in target.test.sentences
    ]
    assert deciphered == [list(s.tokens) for s in source.test.sentences]
    assert histogram(target.test) == histogram(source.test)
    assert sum(histogram(source.test).values()) > 0


def test_cipher_is_label_preserving():
    source, target = synth_cipher_corpora(5, 10, 15, 15)
    for split in ("dev", "test"):
        src_split = source.by_split()[split]
        tgt_split = target.by_split()[split]
        for s, t in zip(src_split.sentences, tgt_split.sentences):
            assert s.gold_tags == t.gold_tags
            assert len(s.tokens) == len(t.tokens)


def test_cipher_round_trip_on_generated_tokens():
    source, target = synth_cipher_corpora(8, 60, 10, 10)
    for src_corpus, tgt_corpus in zip(
        source.by_split().values(), target.by_split().values()
    ):
        for s, t in zip(src_corpus.sentences, tgt_corpus.sentences):
            assert tuple(decipher_token(tok) for tok in t.tokens) == s.tokens
            assert tuple(encipher_token(tok) for tok in s.tokens) == t.tokens


def test_surface_forms_differ():
    source, target = synth_cipher_corpora(2, 50, 10, 10)
    src_vocab = {t for s in source.train.sentences for t in s.tokens}
    tgt_vocab = {t for s in target.train.sentences for t in s.tokens}
    overlap = src_vocab & tgt_vocab
    # Punctuation is shared by design; words are not.
    assert overlap <= {"."}


def test_no_cipher_collision_with_function_words():
    source, _ = synth_cipher_corpora(4, 200, 20, 20)
    targets = set(FUNCTION_WORD_MAP.values())
    for s in source.train.sentences:
        for tok in s.tokens:
            if tok not in FUNCTION_WORD_MAP:
                assert encipher_token(tok) not in targets


def test_rejects_zero_sizes():
    with pytest.raises(ConfigurationError):
        synth_cipher_corpora(1, 0, 1, 1)


def test_rejects_scheme_without_planted_types():
    from xldistill.data import LabelScheme

    with pytest.raises(ConfigurationError):
        synth_cipher_corpora(1, 5, 5, 5, LabelScheme(("LOC", "MISC")))
