"""Multi-channel teacher-student distillation with MMD domain adaptation
for zero-shot cross-lingual sequence labeling."""

from .data import Corpus, LabelScheme, Sentence, default_scheme, parse_conll, write_conll
from .encoding import EncodedBatch, SubtokenVocab, encode_batch
from .evaluation import EntitySpan, MetricsResult, entity_f1, extract_spans
from .losses import KernelConfig, LossConfig, mmd_squared
from .model import EncoderConfig, LayeredModel, build_model, load_checkpoint, save_checkpoint
from .synth import synth_cipher_corpora
from .training import TrainConfig, distill_student, generate_soft_labels, train_teacher

__version__ = "0.1.0"

__all__ = [
    "Corpus",
    "EncodedBatch",
    "EncoderConfig",
    "EntitySpan",
    "KernelConfig",
    "LabelScheme",
    "LayeredModel",
    "LossConfig",
    "MetricsResult",
    "Sentence",
    "SubtokenVocab",
    "TrainConfig",
    "build_model",
    "default_scheme",
    "distill_student",
    "encode_batch",
    "entity_f1",
    "extract_spans",
    "generate_soft_labels",
    "load_checkpoint",
    "mmd_squared",
    "parse_conll",
    "save_checkpoint",
    "synth_cipher_corpora",
    "train_teacher",
    "write_conll",
]
