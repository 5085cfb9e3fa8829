"""Entity-level scoring: BIO span extraction and span-exact precision/recall/F1."""

from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .data import LabelScheme, parse_conll
from .errors import DataError


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Half-open word-index span [start, end) of a single entity type."""

    start: int
    end: int
    type: str


def extract_spans(tags: Sequence[str]) -> list[EntitySpan]:
    """Decode BIO tags into spans using relaxed (conlleval) chunk semantics.

    An "I-X" with no compatible predecessor starts a new X span, and a type
    change inside a run splits spans, so malformed model output still decodes
    to something scoreable.
    """
    spans: list[EntitySpan] = []
    start = None
    current_type = None

    def close(end: int):
        nonlocal start, current_type
        if start is not None:
            spans.append(EntitySpan(start, end, current_type))
        start = None
        current_type = None

    for i, tag in enumerate(tags):
        if tag == "O":
            close(i)
        elif tag.startswith("B-"):
            close(i)
            start, current_type = i, tag[2:]
        else:  # I-X: continue when compatible, otherwise start fresh
            etype = tag[2:]
            if current_type != etype:
                close(i)
                start, current_type = i, etype
    close(len(tags))
    return spans


@dataclass
class TypeCounts:
    predicted: int = 0
    correct: int = 0
    gold: int = 0

    @property
    def precision(self) -> float:
        return self.correct / self.predicted if self.predicted else 0.0

    @property
    def recall(self) -> float:
        return self.correct / self.gold if self.gold else 0.0

    @property
    def f1(self) -> float:
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0


@dataclass
class MetricsResult:
    """Micro-averaged span scores plus a per-type breakdown.

    `predicted`, `correct`, `gold` are the raw match counts; precision is
    correct/predicted, recall is correct/gold, and every zero denominator
    scores 0 by convention.
    """

    overall: TypeCounts = field(default_factory=TypeCounts)
    per_type: dict[str, TypeCounts] = field(default_factory=dict)

    @property
    def precision(self) -> float:
        return self.overall.precision

    @property
    def recall(self) -> float:
        return self.overall.recall

    @property
    def f1(self) -> float:
        return self.overall.f1

    def to_dict(self) -> dict:
        def counts(c: TypeCounts) -> dict:
            return {
                "predicted": c.predicted,
                "correct": c.correct,
                "gold": c.gold,
                "precision": c.precision,
                "recall": c.recall,
                "f1": c.f1,
            }

        return {
            "overall": counts(self.overall),
            "per_type": {t: counts(c) for t, c in sorted(self.per_type.items())},
        }

    def report(self) -> str:
        lines = [
            "type      predicted  correct  gold   P       R       F1",
        ]

        def row(name: str, c: TypeCounts) -> str:
            return (
                f"{name:<9} {c.predicted:>9d} {c.correct:>8d} {c.gold:>5d}"
                f"   {c.precision:.4f}  {c.recall:.4f}  {c.f1:.4f}"
            )

        lines.append(row("overall", self.overall))
        for t in sorted(self.per_type):
            lines.append(row(t, self.per_type[t]))
        return "\n".join(lines)


def entity_f1(
    pred: Sequence[Sequence[str]], gold: Sequence[Sequence[str]]
) -> MetricsResult:
    """Score predicted tag sequences against gold, span-exact per sentence."""
    if len(pred) != len(gold):
        raise DataError(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    result = MetricsResult()
    per_type: dict[str, TypeCounts] = defaultdict(TypeCounts)
    for i, (p_tags, g_tags) in enumerate(zip(pred, gold)):
        if len(p_tags) != len(g_tags):
            raise DataError(
                f"sentence {i}: {len(p_tags)} predicted tags vs {len(g_tags)} gold"
            )
        p_spans = extract_spans(p_tags)
        g_spans = set(extract_spans(g_tags))
        for span in p_spans:
            per_type[span.type].predicted += 1
            if span in g_spans:
                per_type[span.type].correct += 1
        for span in g_spans:
            per_type[span.type].gold += 1
    for counts in per_type.values():
        result.overall.predicted += counts.predicted
        result.overall.correct += counts.correct
        result.overall.gold += counts.gold
    result.per_type = dict(per_type)
    return result


def score_prediction_file(
    pred_path, gold_path, scheme: LabelScheme
) -> MetricsResult:
    """Score a two-column (token, tag) prediction file against a gold CoNLL file."""
    pred = parse_conll(pred_path, scheme, language="pred", split="test")
    gold = parse_conll(gold_path, scheme, language="gold", split="test")
    if not pred.labeled or not gold.labeled:
        raise DataError("both files must carry a tag column")
    if len(pred) != len(gold):
        raise DataError(f"{len(pred)} predicted sentences vs {len(gold)} gold")
    for i, (p, g) in enumerate(zip(pred.sentences, gold.sentences)):
        if p.tokens != g.tokens:
            raise DataError(f"sentence {i}: token mismatch between files")
    return entity_f1(
        [s.gold_tags for s in pred.sentences], [s.gold_tags for s in gold.sentences]
    )
