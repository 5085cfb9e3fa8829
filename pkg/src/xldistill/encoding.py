"""Character-level BPE subtokenization and batch encoding with label alignment.

The vocabulary is trained on the source train split only, so target-language
words decompose into characters and rare pieces: the cross-lingual gap shows
up in the token stream, not just the label transfer.  Words are labeled on
their first subtoken; every other position carries the sentinel and is
excluded from losses and metrics.
"""

from __future__ import annotations

import json
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import torch

from .data import Corpus, LabelScheme, Sentence
from .errors import ConfigurationError

PAD, UNK, CLS, SEP = "[PAD]", "[UNK]", "[CLS]", "[SEP]"
SPECIALS = (PAD, UNK, CLS, SEP)
PAD_ID, UNK_ID, CLS_ID, SEP_ID = range(4)
LABEL_SENTINEL = -100


class SubtokenVocab:
    """Byte-pair vocabulary over characters with an ordered merge list.

    Merges never involve uppercase characters, so a capitalized word always
    starts with a bare single-character subtoken.  Case is the one surface
    feature the synthetic cipher preserves, and keeping capitals atomic keeps
    their embeddings trained in both languages.
    """

    def __init__(self, chars: Sequence[str], merges: Sequence[tuple[str, str]]):
        self.chars = tuple(chars)
        self.merges = tuple((a, b) for a, b in merges)
        tokens = list(SPECIALS) + list(self.chars)
        for a, b in self.merges:
            tokens.append(a + b)
        if len(set(tokens)) != len(tokens):
            raise ConfigurationError("duplicate tokens in vocabulary")
        self.token_to_id = {t: i for i, t in enumerate(tokens)}
        self.id_to_token = tuple(tokens)
        self._word_cache: dict[str, tuple[int, ...]] = {}

    def __len__(self) -> int:
        return len(self.id_to_token)

    @classmethod
    def train(cls, corpus: Corpus, n_merges: int = 120) -> "SubtokenVocab":
        """Learn merges from word frequencies; ties break lexicographically."""
        word_freq = Counter(t for s in corpus.sentences for t in s.tokens)
        chars = sorted({c for w in word_freq for c in w})
        pieces = {w: tuple(w) for w in word_freq}
        merges: list[tuple[str, str]] = []
        for _ in range(n_merges):
            pair_freq: Counter = Counter()
            for w, parts in pieces.items():
                f = word_freq[w]
                for a, b in zip(parts, parts[1:]):
                    if a[0].isupper() or b[0].isupper():
                        continue
                    pair_freq[(a, b)] += f
            if not pair_freq:
                break
            best = min(pair_freq, key=lambda p: (-pair_freq[p], p))
            if pair_freq[best] < 2:
                break
            merges.append(best)
            pieces = {w: _apply_merge(parts, best) for w, parts in pieces.items()}
        return cls(chars, merges)

    def encode_word(self, word: str) -> tuple[int, ...]:
        cached = self._word_cache.get(word)
        if cached is not None:
            return cached
        parts: tuple[str, ...] = tuple(word)
        for merge in self.merges:
            if len(parts) < 2:
                break
            parts = _apply_merge(parts, merge)
        ids = tuple(self.token_to_id.get(p, UNK_ID) for p in parts)
        self._word_cache[word] = ids
        return ids

    def save(self, path) -> None:
        payload = {"chars": list(self.chars), "merges": [list(m) for m in self.merges]}
        Path(path).write_text(json.dumps(payload), encoding="utf-8")

    @classmethod
    def load(cls, path) -> "SubtokenVocab":
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(payload["chars"], [tuple(m) for m in payload["merges"]])


def _apply_merge(parts: tuple[str, ...], merge: tuple[str, str]) -> tuple[str, ...]:
    a, b = merge
    out: list[str] = []
    i = 0
    while i < len(parts):
        if i + 1 < len(parts) and parts[i] == a and parts[i + 1] == b:
            out.append(a + b)
            i += 2
        else:
            out.append(parts[i])
            i += 1
    return tuple(out)


@dataclass
class EncodedBatch:
    """Padded subtoken batch with first-subtoken label alignment.

    `label_ids` carries the tag index at the first subtoken of each surviving
    word and LABEL_SENTINEL at every other position (continuation subtokens,
    boundary markers, padding).  `first_subtoken_index` maps word position to
    subtoken position per sentence, for the words that survived truncation.
    """

    subtoken_ids: torch.Tensor
    attention_mask: torch.Tensor
    label_ids: torch.Tensor
    first_subtoken_index: tuple[tuple[int, ...], ...]

    def __len__(self) -> int:
        return self.subtoken_ids.shape[0]

    @property
    def seq_len(self) -> int:
        return self.subtoken_ids.shape[1]

    def valid_mask(self) -> torch.Tensor:
        """Boolean [B, T] mask of first-subtoken positions (prediction targets)."""
        mask = torch.zeros_like(self.subtoken_ids, dtype=torch.bool)
        for row, positions in enumerate(self.first_subtoken_index):
            for pos in positions:
                mask[row, pos] = True
        return mask


def encode_batch(
    sentences: Sequence[Sentence],
    vocab: SubtokenVocab,
    scheme: LabelScheme,
    max_len: int,
) -> EncodedBatch:
    """Subtokenize and pad a batch; whole words that overflow max_len are dropped."""
    if max_len < 3:
        raise ConfigurationError("max_len must be >= 3 (boundary markers need room)")
    budget = max_len - 2
    rows: list[list[int]] = []
    row_labels: list[list[int]] = []
    first_index: list[tuple[int, ...]] = []
    for sentence in sentences:
        ids = [CLS_ID]
        labels = [LABEL_SENTINEL]
        firsts: list[int] = []
        used = 0
        for w, word in enumerate(sentence.tokens):
            piece = vocab.encode_word(word)
            if used + len(piece) > budget:
                break
            firsts.append(len(ids))
            if sentence.gold_tags is not None:
                labels.append(scheme.tag_to_index[sentence.gold_tags[w]])
            else:
                labels.append(LABEL_SENTINEL)
            labels.extend([LABEL_SENTINEL] * (len(piece) - 1))
            ids.extend(piece)
            used += len(piece)
        ids.append(SEP_ID)
        labels.append(LABEL_SENTINEL)
        rows.append(ids)
        row_labels.append(labels)
        first_index.append(tuple(firsts))

    t_max = max(len(r) for r in rows)
    n = len(rows)
    subtoken_ids = torch.full((n, t_max), PAD_ID, dtype=torch.long)
    attention_mask = torch.zeros((n, t_max), dtype=torch.long)
    label_ids = torch.full((n, t_max), LABEL_SENTINEL, dtype=torch.long)
    for i, (ids, labels) in enumerate(zip(rows, row_labels)):
        subtoken_ids[i, : len(ids)] = torch.tensor(ids, dtype=torch.long)
        attention_mask[i, : len(ids)] = 1
        label_ids[i, : len(labels)] = torch.tensor(labels, dtype=torch.long)
    return EncodedBatch(subtoken_ids, attention_mask, label_ids, tuple(first_index))
