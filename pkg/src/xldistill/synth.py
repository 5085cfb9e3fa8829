"""Synthetic parallel benchmark: a templated source language and a ciphered target.

The target side of each sentence pair is produced by a fixed character
substitution cipher (case-preserving, letters only) plus a function-word
swap, so surface forms differ between the two languages while sentence
templates, entity positions, and gold tags are shared.  Capitalization and
punctuation survive the cipher, which is the transferable signal a model
trained on the source side can exploit on the target side.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .data import Corpus, LabelScheme, Sentence, default_scheme
from .errors import ConfigurationError

SOURCE_LANGUAGE = "src"
TARGET_LANGUAGE = "tgt"

_PLAIN = "abcdefghijklmnopqrstuvwxyz"
_CIPHER = "rgtskpmahicdevxlwjzyfoqnbu"

_ENC_TABLE = str.maketrans(
    _PLAIN + _PLAIN.upper(), _CIPHER + _CIPHER.upper()
)
_DEC_TABLE = str.maketrans(
    _CIPHER + _CIPHER.upper(), _PLAIN + _PLAIN.upper()
)

# Closed-class words are swapped wholesale instead of ciphered, mimicking a
# real language pair where function words share no surface form.
FUNCTION_WORD_MAP = {
    "the": "das",
    "a": "ein",
    "an": "einer",
    "in": "im",
    "at": "bei",
    "of": "von",
    "to": "nach",
    "and": "und",
    "with": "mit",
    "for": "fur",
    "on": "auf",
    "near": "nahe",
    "from": "aus",
    "its": "sein",
    "this": "diese",
}
_INVERSE_FUNCTION_WORD_MAP = {v: k for k, v in FUNCTION_WORD_MAP.items()}


def encipher_token(token: str) -> str:
    if token in FUNCTION_WORD_MAP:
        return FUNCTION_WORD_MAP[token]
    return token.translate(_ENC_TABLE)


def decipher_token(token: str) -> str:
    """Inverse of `encipher_token`; exposed so tests can audit generated pairs."""
    if token in _INVERSE_FUNCTION_WORD_MAP:
        return _INVERSE_FUNCTION_WORD_MAP[token]
    return token.translate(_DEC_TABLE)


_FIRST_NAMES = (
    "Anna", "Boris", "Clara", "David", "Elena", "Felix", "Greta", "Henry",
    "Irene", "Jonas", "Karin", "Louis", "Marta", "Nils", "Olga", "Peter",
    "Rosa", "Simon", "Tessa", "Victor",
)
_SURNAMES = (
    "Abbot", "Becker", "Carver", "Dalton", "Eriksen", "Foster", "Garner",
    "Hansen", "Ingram", "Jensen", "Keller", "Larsen", "Mercer", "Norris",
    "Olsen", "Parker", "Quincy", "Rhodes", "Sawyer", "Turner",
)
_PLACES = (
    "Avaria", "Bergen", "Corinth", "Drava", "Fermont", "Galway", "Istria",
    "Jutland", "Kolmar", "Lisbon", "Madera", "Norvick", "Oporto", "Prague",
    "Quimper", "Ravenna", "Salzburg", "Tirana", "Utrecht", "Zagreb",
)
_PLACE_PREFIXES = ("New", "East", "West", "Port")
_ORG_NAMES = (
    "Altex", "Bravura", "Cortek", "Dynamo", "Exacta", "Fabrix", "Gavotte",
    "Helix", "Inova", "Jetline", "Kappa", "Lumina", "Moxa", "Nortech",
    "Orbita", "Pivotal", "Quanta", "Rubicon", "Solara", "Tekton",
)
_ORG_SUFFIXES = ("Corp", "Group", "Labs", "Bank", "Union")

# Templates are token sequences; {PER}/{ORG}/{LOC} slots expand to one or two
# tokens with the matching B-/I- tags.  Slot positions are deliberately
# type-skewed (PER leans early, ORG post-verb, LOC after prepositions) so a
# position prior survives the cipher.
_TEMPLATES = (
    ("{PER}", "visited", "{LOC}", "with", "{PER}", "."),
    ("{PER}", "joined", "{ORG}", "in", "{LOC}", "."),
    ("the", "board", "of", "{ORG}", "praised", "{PER}", "."),
    ("{ORG}", "opened", "a", "branch", "near", "{LOC}", "."),
    ("{PER}", "works", "for", "{ORG}", "."),
    ("the", "mayor", "of", "{LOC}", "met", "{PER}", "."),
    ("{ORG}", "reported", "talks", "with", "{ORG}", "."),
    ("{PER}", "traveled", "from", "{LOC}", "to", "{LOC}", "."),
    ("{LOC}", "hosted", "the", "festival", "of", "{ORG}", "."),
    ("the", "museum", "in", "{LOC}", "honored", "{PER}", "."),
    ("{PER}", "studies", "history", "at", "{ORG}", "."),
    ("fans", "of", "{ORG}", "filled", "{LOC}", "."),
    ("{PER}", "and", "{PER}", "founded", "{ORG}", "."),
    ("{ORG}", "moved", "its", "office", "to", "{LOC}", "."),
    ("the", "market", "reopened", "on", "monday", "."),
    ("prices", "fell", "again", "this", "week", "."),
)

_SLOT_TYPES = ("PER", "ORG", "LOC")


def _realize_slot(slot: str, rng: random.Random) -> tuple[list[str], list[str]]:
    if slot == "PER":
        if rng.random() < 0.5:
            words = [rng.choice(_FIRST_NAMES), rng.choice(_SURNAMES)]
        else:
            words = [rng.choice(_FIRST_NAMES)]
    elif slot == "ORG":
        if rng.random() < 0.6:
            words = [rng.choice(_ORG_NAMES), rng.choice(_ORG_SUFFIXES)]
        else:
            words = [rng.choice(_ORG_NAMES)]
    elif slot == "LOC":
        if rng.random() < 0.2:
            words = [rng.choice(_PLACE_PREFIXES), rng.choice(_PLACES)]
        else:
            words = [rng.choice(_PLACES)]
    else:
        raise ConfigurationError(f"unknown slot {slot!r}")
    tags = [f"B-{slot}"] + [f"I-{slot}"] * (len(words) - 1)
    return words, tags


def _generate_sentence(rng: random.Random) -> Sentence:
    template = rng.choice(_TEMPLATES)
    tokens: list[str] = []
    tags: list[str] = []
    for item in template:
        if item.startswith("{"):
            words, word_tags = _realize_slot(item[1:-1], rng)
            tokens.extend(words)
            tags.extend(word_tags)
        else:
            tokens.append(item)
            tags.append("O")
    return Sentence(tuple(tokens), tuple(tags))


def encipher_sentence(sentence: Sentence) -> Sentence:
    """Target-language twin of a source sentence; gold tags carry over unchanged."""
    return Sentence(
        tuple(encipher_token(t) for t in sentence.tokens), sentence.gold_tags
    )


@dataclass(frozen=True)
class CorpusPair:
    """One language side of the benchmark, keyed by split."""

    train: Corpus
    dev: Corpus
    test: Corpus

    def by_split(self) -> dict[str, Corpus]:
        return {"train": self.train, "dev": self.dev, "test": self.test}


def synth_cipher_corpora(
    seed: int,
    n_train: int,
    n_dev: int,
    n_test: int,
    scheme: LabelScheme | None = None,
) -> tuple[CorpusPair, CorpusPair]:
    """Generate parallel source/target corpora for all three splits.

    The target train split has its gold tags stripped (the zero-shot role);
    target dev and test keep them for checkpoint selection and scoring.
    Generation is fully determined by the seed and sizes.
    """
    scheme = scheme or default_scheme()
    for t in _SLOT_TYPES:
        if t not in scheme.entity_types:
            raise ConfigurationError(
                f"synthetic generator plants {t} entities but scheme lacks that type"
            )
    if min(n_train, n_dev, n_test) < 1:
        raise ConfigurationError("split sizes must be >= 1")

    rng = random.Random(seed)
    source: dict[str, Corpus] = {}
    target: dict[str, Corpus] = {}
    for split, size in (("train", n_train), ("dev", n_dev), ("test", n_test)):
        src_sentences = tuple(_generate_sentence(rng) for _ in range(size))
        tgt_sentences = tuple(encipher_sentence(s) for s in src_sentences)
        if split == "train":
            tgt_sentences = tuple(Sentence(s.tokens, None) for s in tgt_sentences)
        source[split] = Corpus(
            src_sentences, language=SOURCE_LANGUAGE, split=split, labeled=True
        )
        target[split] = Corpus(
            tgt_sentences,
            language=TARGET_LANGUAGE,
            split=split,
            labeled=(split != "train"),
        )
    return CorpusPair(**source), CorpusPair(**target)
