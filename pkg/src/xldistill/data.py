"""Corpus structures, CoNLL column-file I/O, and BIO tag validation."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .errors import ConllParseError, DataError, UnknownTagError

SPLITS = ("train", "dev", "test")


@dataclass(frozen=True)
class LabelScheme:
    """Entity types plus the induced BIO tag set.

    Tags are ordered "O" first, then a B-/I- pair per entity type, so the
    tag index space is dense and "O" is always index 0.
    """

    entity_types: tuple[str, ...]
    tags: tuple[str, ...] = field(init=False, repr=False)
    tag_to_index: dict[str, int] = field(init=False, repr=False)

    def __post_init__(self):
        types = tuple(self.entity_types)
        if len(set(types)) != len(types):
            raise DataError(f"duplicate entity types in {types!r}")
        if any(not t for t in types):
            raise DataError("entity type names must be non-empty")
        tags = ["O"]
        for t in types:
            tags.append(f"B-{t}")
            tags.append(f"I-{t}")
        object.__setattr__(self, "entity_types", types)
        object.__setattr__(self, "tags", tuple(tags))
        object.__setattr__(self, "tag_to_index", {tag: i for i, tag in enumerate(tags)})

    @property
    def n_tags(self) -> int:
        return len(self.tags)

    def index_to_tag(self, index: int) -> str:
        return self.tags[index]


def default_scheme() -> LabelScheme:
    """Label scheme used by the synthetic benchmark: LOC, ORG, PER."""
    return LabelScheme(("LOC", "ORG", "PER"))


@dataclass(frozen=True)
class Sentence:
    """Tokenized sentence with optional gold BIO tags of equal length."""

    tokens: tuple[str, ...]
    gold_tags: Optional[tuple[str, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.gold_tags is not None:
            object.__setattr__(self, "gold_tags", tuple(self.gold_tags))
            if len(self.gold_tags) != len(self.tokens):
                raise DataError(
                    f"{len(self.gold_tags)} tags for {len(self.tokens)} tokens"
                )

    def __len__(self) -> int:
        return len(self.tokens)


@dataclass(frozen=True)
class Corpus:
    """Immutable list of sentences with a language code and split role."""

    sentences: tuple[Sentence, ...]
    language: str
    split: str
    labeled: bool

    def __post_init__(self):
        object.__setattr__(self, "sentences", tuple(self.sentences))
        if not self.language or not self.split:
            raise DataError("language and split must be non-empty")
        if self.labeled and any(s.gold_tags is None for s in self.sentences):
            raise DataError("labeled corpus contains sentences without gold tags")

    def __len__(self) -> int:
        return len(self.sentences)


@dataclass(frozen=True)
class BioViolation:
    """An I- tag whose predecessor is incompatible with its entity type."""

    position: int
    tag: str
    expected_prefix: str


def validate_bio(tags: Sequence[str], scheme: LabelScheme) -> list[BioViolation]:
    """Return a violation for every "I-X" not preceded by "B-X" or "I-X".

    Violations are data to report, not errors; callers decide whether to
    reject or (like the span decoder) repair them.
    """
    violations = []
    for i, tag in enumerate(tags):
        if not tag.startswith("I-"):
            continue
        etype = tag[2:]
        prev = tags[i - 1] if i > 0 else None
        if prev not in (f"B-{etype}", f"I-{etype}"):
            violations.append(
                BioViolation(position=i, tag=tag, expected_prefix=f"B-{etype}/I-{etype}")
            )
    return violations


def parse_conll(path, scheme: LabelScheme, language: str, split: str) -> Corpus:
    """Read a CoNLL column file: one token per line, blank line between sentences.

    The token is column 0 and, when the file is labeled, the tag is the final
    column; intervening columns are ignored.  Whether the file is labeled is
    inferred from the column count of the first content line, and every
    content line must then agree.
    """
    path = Path(path)
    sentences: list[Sentence] = []
    tokens: list[str] = []
    tags: list[str] = []
    ncols: int | None = None

    def flush():
        if tokens:
            sentences.append(
                Sentence(tuple(tokens), tuple(tags) if tags else None)
            )
            tokens.clear()
            tags.clear()

    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line:
                flush()
                continue
            cols = line.split()
            if ncols is None:
                ncols = len(cols)
            elif len(cols) != ncols:
                raise ConllParseError(
                    path, lineno, f"expected {ncols} columns, got {len(cols)}"
                )
            tokens.append(cols[0])
            if ncols >= 2:
                tag = cols[-1]
                if tag not in scheme.tag_to_index:
                    raise UnknownTagError(tag, lineno)
                tags.append(tag)
    flush()
    labeled = ncols is not None and ncols >= 2
    return Corpus(tuple(sentences), language=language, split=split, labeled=labeled)


def write_conll(corpus: Corpus, path) -> None:
    """Write a corpus in the two-column format `parse_conll` reads back."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = []
    for sentence in corpus.sentences:
        if corpus.labeled:
            for token, tag in zip(sentence.tokens, sentence.gold_tags):
                lines.append(f"{token} {tag}\n")
        else:
            for token in sentence.tokens:
                lines.append(f"{token}\n")
        lines.append("\n")
    path.write_text("".join(lines), encoding="utf-8")


def strip_labels(corpus: Corpus) -> Corpus:
    """Copy of the corpus with gold tags removed (unlabeled role)."""
    return Corpus(
        tuple(Sentence(s.tokens, None) for s in corpus.sentences),
        language=corpus.language,
        split=corpus.split,
        labeled=False,
    )
