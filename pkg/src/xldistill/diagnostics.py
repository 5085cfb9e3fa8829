"""Domain-discrepancy diagnostics over the four (model, language) populations.

Each domain is a set of CLS vectors collected from one model on one language's
sentences.  Pairwise reports use squared MMD on the full populations and
symmetric KL / cosine similarity on the mean-center vectors, with a fixed
kernel so numbers are comparable across ablation runs.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass
from itertools import combinations
from pathlib import Path

import numpy as np
import torch

from .data import Corpus
from .encoding import SubtokenVocab, encode_batch
from .errors import ConfigurationError, DegenerateInputError
from .losses import REPORT_KERNEL, KernelConfig, cosine_sim, mmd_squared, sym_kl
from .model import LayeredModel

MODEL_TAGS = ("teacher", "student")
LANGUAGE_TAGS = ("source", "target")


@dataclass(frozen=True)
class DomainSample:
    """CLS vectors of one model over one language's sentences."""

    model_tag: str
    language_tag: str
    vectors: np.ndarray

    def __post_init__(self):
        if self.model_tag not in MODEL_TAGS:
            raise ConfigurationError(f"model_tag must be one of {MODEL_TAGS}")
        if self.language_tag not in LANGUAGE_TAGS:
            raise ConfigurationError(f"language_tag must be one of {LANGUAGE_TAGS}")
        if self.vectors.ndim != 2 or self.vectors.shape[0] < 2:
            raise DegenerateInputError("need at least 2 vectors per domain")
        if not np.isfinite(self.vectors).all():
            raise DegenerateInputError("non-finite values in domain vectors")

    @property
    def key(self) -> str:
        return f"{self.model_tag}_{self.language_tag}"


def collect_cls(
    model: LayeredModel,
    corpus: Corpus,
    n_samples: int,
    seed: int,
    *,
    vocab: SubtokenVocab,
    max_len: int,
    model_tag: str,
    language_tag: str,
    batch_size: int = 32,
) -> DomainSample:
    """Deterministic corpus sample, inference-mode CLS vectors in corpus order."""
    if len(corpus) == 0:
        raise DegenerateInputError("empty corpus")
    n = min(n_samples, len(corpus))
    indices = sorted(random.Random(seed).sample(range(len(corpus)), n))
    vectors = []
    with torch.no_grad():
        for start in range(0, n, batch_size):
            chunk = indices[start : start + batch_size]
            batch = encode_batch(
                [corpus.sentences[i] for i in chunk], vocab, model.scheme, max_len
            )
            vectors.append(model.encode(batch, train_mode=False).cls.cpu().numpy())
    return DomainSample(
        model_tag=model_tag,
        language_tag=language_tag,
        vectors=np.concatenate(vectors, axis=0),
    )


@dataclass(frozen=True)
class PairMetrics:
    mmd: float
    sym_kl: float
    cosine: float


@dataclass
class DiagnosticsReport:
    """All six unordered domain pairs with their distance metrics."""

    pairs: dict[tuple[str, str], PairMetrics]
    sample_sizes: dict[str, int]
    kernel: KernelConfig

    def get(self, key_a: str, key_b: str) -> PairMetrics:
        if (key_a, key_b) in self.pairs:
            return self.pairs[(key_a, key_b)]
        return self.pairs[(key_b, key_a)]

    def to_records(self) -> list[dict]:
        records = []
        for (a, b), metrics in self.pairs.items():
            records.append(
                {
                    "pair": f"{a}--{b}",
                    "mmd": metrics.mmd,
                    "sym_kl": metrics.sym_kl,
                    "cosine": metrics.cosine,
                    "n_a": self.sample_sizes[a],
                    "n_b": self.sample_sizes[b],
                }
            )
        return records

    def write(self, path) -> None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", encoding="utf-8") as fh:
            for record in self.to_records():
                fh.write(json.dumps(record) + "\n")


def _softmax(v: np.ndarray) -> np.ndarray:
    shifted = v - v.max()
    e = np.exp(shifted)
    return e / e.sum()


def domain_report(
    samples: list[DomainSample], kernel: KernelConfig = REPORT_KERNEL
) -> DiagnosticsReport:
    """Pairwise MMD / symmetric KL / cosine over all four domains.

    MMD runs on the full vector populations; symmetric KL and cosine compare
    the two mean-center vectors (KL after a softmax to make them probability
    vectors).
    """
    by_key = {s.key: s for s in samples}
    expected = [f"{m}_{l}" for m in ("teacher", "student") for l in ("source", "target")]
    missing = [k for k in expected if k not in by_key]
    if missing:
        raise ConfigurationError(f"missing domains: {missing}")
    pairs: dict[tuple[str, str], PairMetrics] = {}
    for key_a, key_b in combinations(expected, 2):
        a, b = by_key[key_a], by_key[key_b]
        mmd = float(
            mmd_squared(
                torch.from_numpy(a.vectors.astype(np.float64)),
                torch.from_numpy(b.vectors.astype(np.float64)),
                kernel,
            )
        )
        mean_a = a.vectors.mean(axis=0)
        mean_b = b.vectors.mean(axis=0)
        pairs[(key_a, key_b)] = PairMetrics(
            mmd=mmd,
            sym_kl=sym_kl(_softmax(mean_a), _softmax(mean_b)),
            cosine=cosine_sim(mean_a, mean_b),
        )
    sizes = {k: int(by_key[k].vectors.shape[0]) for k in expected}
    return DiagnosticsReport(pairs=pairs, sample_sizes=sizes, kernel=kernel)


def export_embeddings(samples: list[DomainSample], path) -> Path:
    """Tab-separated dump of all domain vectors, sorted, full float precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    ordered = sorted(samples, key=lambda s: (s.model_tag, s.language_tag))
    dim = ordered[0].vectors.shape[1]
    lines = ["\t".join(["model", "language", "index"] + [f"v{i}" for i in range(dim)])]
    for sample in ordered:
        if sample.vectors.shape[1] != dim:
            raise ConfigurationError("all domains must share the vector dimension")
        for i, vec in enumerate(sample.vectors):
            cells = [sample.model_tag, sample.language_tag, str(i)]
            cells.extend(repr(float(x)) for x in vec)
            lines.append("\t".join(cells))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


def read_embeddings(path) -> list[DomainSample]:
    """Parse an `export_embeddings` file back into domain samples."""
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    groups: dict[tuple[str, str], list[list[float]]] = {}
    for line in lines[1:]:
        cells = line.split("\t")
        key = (cells[0], cells[1])
        groups.setdefault(key, []).append([float(x) for x in cells[3:]])
    return [
        DomainSample(model_tag=m, language_tag=l, vectors=np.array(vecs, dtype=np.float64))
        for (m, l), vecs in groups.items()
    ]
