"""Teacher training, per-layer soft-label generation, and student distillation.

The teacher is optimized on labeled source data with every active channel
supervised; the student is optimized on unlabeled target data against the
teacher's stored per-channel soft labels, with per-step squared-MMD terms
computed on a paired source batch (teacher is frozen throughout).  Checkpoint
selection is by dev entity F1 of the main channel.
"""

from __future__ import annotations

import copy
import json
import math
import random
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import torch

from . import losses
from .data import Corpus, LabelScheme
from .encoding import EncodedBatch, SubtokenVocab, encode_batch
from .errors import ConfigurationError, DataError
from .evaluation import MetricsResult, entity_f1
from .losses import KernelConfig, LossConfig
from .model import EncoderConfig, LayeredModel, build_model, init_student_from


@dataclass
class TrainConfig:
    """Optimization settings; defaults follow the full-scale recipe.

    Desk-scale runs on the synthetic benchmark override the learning rates
    (random-init encoders need far larger steps than fine-tuning does); see
    `desk_train_config`.
    """

    lr_teacher: float = 5e-5
    lr_student: float = 2e-5
    batch_size: int = 32
    epochs: int = 10
    max_len: int = 128
    dropout: float = 0.1
    seed: int = 13
    warmup_fraction: float = 0.1
    weight_decay: float = 0.01

    def __post_init__(self):
        if self.lr_teacher <= 0 or self.lr_student <= 0:
            raise ConfigurationError("learning rates must be positive")
        if self.epochs < 1:
            raise ConfigurationError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")


def desk_train_config(seed: int = 13) -> TrainConfig:
    """Synthetic-benchmark defaults: random-init encoder, 1-core CPU budget."""
    return TrainConfig(lr_teacher=1e-3, lr_student=1e-3, seed=seed)


def make_optimizer(
    model: LayeredModel,
    lr: float,
    total_steps: int,
    warmup_fraction: float,
    weight_decay: float,
) -> tuple[torch.optim.Optimizer, torch.optim.lr_scheduler.LambdaLR]:
    """AdamW with linear warmup then linear decay; no decay on biases, norms, mixture."""
    decay, no_decay = [], []
    for name, param in model.named_parameters():
        if not param.requires_grad:
            continue
        if name == "mixture" or name.endswith(".bias") or "norm" in name.lower():
            no_decay.append(param)
        else:
            decay.append(param)
    optimizer = torch.optim.AdamW(
        [
            {"params": decay, "weight_decay": weight_decay},
            {"params": no_decay, "weight_decay": 0.0},
        ],
        lr=lr,
    )
    warmup_steps = int(total_steps * warmup_fraction)

    def factor(step: int) -> float:
        if step < warmup_steps:
            return step / max(1, warmup_steps)
        return max(0.0, (total_steps - step) / max(1, total_steps - warmup_steps))

    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, factor)
    return optimizer, scheduler


def epoch_batches(n_items: int, batch_size: int, rng: random.Random) -> list[list[int]]:
    """Shuffled index batches covering every item once (last batch may be short)."""
    order = list(range(n_items))
    rng.shuffle(order)
    return [order[i : i + batch_size] for i in range(0, n_items, batch_size)]


class _IndexStream:
    """Endless shuffled index source; reshuffles whenever exhausted."""

    def __init__(self, n_items: int, rng: random.Random):
        self.n = n_items
        self.rng = rng
        self._queue: list[int] = []

    def take(self, k: int) -> list[int]:
        out: list[int] = []
        while len(out) < k:
            if not self._queue:
                self._queue = list(range(self.n))
                self.rng.shuffle(self._queue)
            out.append(self._queue.pop())
        return out


def _batch_from(corpus: Corpus, indices: Sequence[int], vocab, scheme, max_len) -> EncodedBatch:
    return encode_batch([corpus.sentences[i] for i in indices], vocab, scheme, max_len)


def channel_predictions(
    model: LayeredModel, batch: EncodedBatch, channels: Sequence[int]
) -> dict[int, list[list[str]]]:
    """Per-channel argmax tags at first-subtoken positions (inference mode)."""
    with torch.no_grad():
        outputs = model.encode(batch, train_mode=False)
        probs = model.channel_probs(outputs, channels)
    result: dict[int, list[list[str]]] = {}
    for m, p in probs.items():
        arr = p.cpu().numpy()
        sentences = []
        for row, positions in enumerate(batch.first_subtoken_index):
            if positions:
                picks = np.argmax(arr[row, list(positions)], axis=-1)
                sentences.append([model.scheme.index_to_tag(int(i)) for i in picks])
            else:
                sentences.append([])
        result[m] = sentences
    return result


def predict_corpus(
    model: LayeredModel,
    corpus: Corpus,
    vocab: SubtokenVocab,
    max_len: int,
    batch_size: int = 32,
    channel: int | None = None,
) -> list[list[str]]:
    """Tag every sentence; words lost to truncation fall back to "O"."""
    channel = channel if channel is not None else model.config.main_channel
    predictions: list[list[str]] = []
    n = len(corpus)
    for start in range(0, n, batch_size):
        indices = range(start, min(start + batch_size, n))
        batch = _batch_from(corpus, indices, vocab, model.scheme, max_len)
        tags = channel_predictions(model, batch, [channel])[channel]
        for row, i in enumerate(indices):
            padded = tags[row] + ["O"] * (len(corpus.sentences[i]) - len(tags[row]))
            predictions.append(padded)
    return predictions


def evaluate_corpus(
    model: LayeredModel,
    corpus: Corpus,
    vocab: SubtokenVocab,
    max_len: int,
    batch_size: int = 32,
    channel: int | None = None,
) -> MetricsResult:
    if not corpus.labeled:
        raise DataError("cannot evaluate an unlabeled corpus")
    pred = predict_corpus(model, corpus, vocab, max_len, batch_size, channel)
    gold = [list(s.gold_tags) for s in corpus.sentences]
    return entity_f1(pred, gold)


def _dev_f1_per_channel(
    model: LayeredModel, corpus: Corpus, vocab, max_len: int, batch_size: int
) -> dict[int, float]:
    channels = model.config.active_channels
    preds: dict[int, list[list[str]]] = {m: [] for m in channels}
    n = len(corpus)
    for start in range(0, n, batch_size):
        indices = range(start, min(start + batch_size, n))
        batch = _batch_from(corpus, indices, vocab, model.scheme, max_len)
        by_channel = channel_predictions(model, batch, channels)
        for m in channels:
            for row, i in enumerate(indices):
                tags = by_channel[m][row]
                preds[m].append(tags + ["O"] * (len(corpus.sentences[i]) - len(tags)))
    gold = [list(s.gold_tags) for s in corpus.sentences]
    return {m: entity_f1(preds[m], gold).f1 for m in channels}


@dataclass
class TrainResult:
    """Trained model (best dev checkpoint restored) plus full history."""

    model: LayeredModel
    history: list[dict]
    best_epoch: int
    best_dev_f1: float
    dev_f1_per_channel: dict[int, float]
    base_encoder_state: dict[str, torch.Tensor] = field(repr=False, default=None)


def write_history(path, records: Iterable[dict]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(record) + "\n")


def _mixture_list(model: LayeredModel) -> list[float]:
    return [float(x) for x in model.mixture.detach()]


def train_teacher(
    source_train: Corpus,
    source_dev: Corpus,
    *,
    encoder_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    scheme: LabelScheme,
    vocab: SubtokenVocab,
) -> TrainResult:
    """Supervised teacher training on labeled source data.

    Optimizes main-channel CE plus the mixture-weighted auxiliary CEs (when
    aux channels are enabled); with them disabled this is plain single-head
    fine-tuning.  Best checkpoint by main-channel dev F1.
    """
    if not source_train.labeled:
        raise DataError("teacher training requires a labeled source train corpus")
    return _train_teacher_impl(
        source_train,
        source_dev,
        target_train=None,
        language_mmd_weight=0.0,
        encoder_cfg=encoder_cfg,
        train_cfg=train_cfg,
        loss_cfg=loss_cfg,
        scheme=scheme,
        vocab=vocab,
    )


def train_teacher_with_language_mmd(
    source_train: Corpus,
    source_dev: Corpus,
    target_train: Corpus,
    weight: float,
    *,
    encoder_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    scheme: LabelScheme,
    vocab: SubtokenVocab,
    kernel: KernelConfig = KernelConfig(),
) -> TrainResult:
    """Teacher objective augmented with weight * MMD^2 of source vs target CLS batches.

    This is the implicit-transfer baseline: language-invariant features are
    encouraged inside the teacher, then a plain distillation follows.  With
    weight 0 this is exactly `train_teacher`.
    """
    if not source_train.labeled:
        raise DataError("teacher training requires a labeled source train corpus")
    if weight < 0:
        raise ConfigurationError("MMD weight must be >= 0")
    return _train_teacher_impl(
        source_train,
        source_dev,
        target_train=target_train if weight > 0 else None,
        language_mmd_weight=weight,
        encoder_cfg=encoder_cfg,
        train_cfg=train_cfg,
        loss_cfg=loss_cfg,
        scheme=scheme,
        vocab=vocab,
        kernel=kernel,
    )


def _train_teacher_impl(
    source_train: Corpus,
    source_dev: Corpus,
    target_train: Corpus | None,
    language_mmd_weight: float,
    *,
    encoder_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    scheme: LabelScheme,
    vocab: SubtokenVocab,
    kernel: KernelConfig = KernelConfig(),
) -> TrainResult:
    model = build_model(encoder_cfg, scheme, train_cfg.seed)
    base_state = model.encoder_state_dict()
    data_rng = random.Random(train_cfg.seed + 1)
    target_stream = (
        _IndexStream(len(target_train), random.Random(train_cfg.seed + 4))
        if target_train is not None
        else None
    )
    steps_per_epoch = math.ceil(len(source_train) / train_cfg.batch_size)
    total_steps = steps_per_epoch * train_cfg.epochs
    optimizer, scheduler = make_optimizer(
        model, train_cfg.lr_teacher, total_steps, train_cfg.warmup_fraction, train_cfg.weight_decay
    )
    channels = (
        encoder_cfg.active_channels
        if loss_cfg.use_aux_channels
        else (encoder_cfg.main_channel,)
    )
    history: list[dict] = []
    best_f1 = -1.0
    best_epoch = -1
    best_state = None
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        for indices in epoch_batches(len(source_train), train_cfg.batch_size, data_rng):
            batch = _batch_from(source_train, indices, vocab, scheme, train_cfg.max_len)
            outputs = model.encode(batch, train_mode=True)
            probs = model.channel_probs(outputs, channels)
            loss, breakdown = losses.teacher_loss(
                probs,
                batch.label_ids,
                model.mixture_weights(),
                loss_cfg,
                encoder_cfg.main_channel,
                encoder_cfg.aux_channels,
            )
            mmd_term = 0.0
            if target_stream is not None:
                tgt_batch = _batch_from(
                    target_train, target_stream.take(len(indices)), vocab, scheme, train_cfg.max_len
                )
                tgt_outputs = model.encode(tgt_batch, train_mode=True)
                mmd = losses.mmd_squared(outputs.cls, tgt_outputs.cls, kernel)
                loss = loss + language_mmd_weight * mmd
                mmd_term = float(mmd)
            optimizer.zero_grad(set_to_none=True)
            loss.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            history.append(
                {
                    "kind": "step",
                    "phase": "teacher",
                    "epoch": epoch,
                    "step": step,
                    "loss": float(loss),
                    "main": float(breakdown["main"]),
                    "aux": float(breakdown["aux"]),
                    "mmd_language": mmd_term,
                    "lr": scheduler.get_last_lr()[0],
                    "mixture": _mixture_list(model),
                }
            )
        per_channel = _dev_f1_per_channel(
            model, source_dev, vocab, train_cfg.max_len, train_cfg.batch_size
        )
        dev_f1 = per_channel[encoder_cfg.main_channel]
        history.append(
            {
                "kind": "epoch",
                "phase": "teacher",
                "epoch": epoch,
                "dev_f1": dev_f1,
                "dev_f1_per_channel": {str(m): f for m, f in per_channel.items()},
                "mixture": _mixture_list(model),
            }
        )
        if dev_f1 > best_f1:
            best_f1 = dev_f1
            best_epoch = epoch
            best_state = copy.deepcopy(model.state_dict())
    model.load_state_dict(best_state)
    model.eval()
    per_channel = _dev_f1_per_channel(
        model, source_dev, vocab, train_cfg.max_len, train_cfg.batch_size
    )
    return TrainResult(
        model=model,
        history=history,
        best_epoch=best_epoch,
        best_dev_f1=best_f1,
        dev_f1_per_channel=per_channel,
        base_encoder_state=base_state,
    )


@dataclass
class SoftLabelStore:
    """Teacher probability distributions per target sentence and channel.

    probs[channel][sentence_index] is a float32 [surviving_words, n_tags]
    array aligned with the first-subtoken positions produced by the same
    vocabulary and max_len.
    """

    channels: tuple[int, ...]
    max_len: int
    probs: dict[int, list[np.ndarray]]

    def n_sentences(self) -> int:
        return len(next(iter(self.probs.values())))


def generate_soft_labels(
    teacher: LayeredModel,
    target_train: Corpus,
    vocab: SubtokenVocab,
    max_len: int,
    batch_size: int = 32,
) -> SoftLabelStore:
    """Deterministic per-channel soft labels for every valid position (dropout off)."""
    channels = teacher.config.active_channels
    probs: dict[int, list[np.ndarray]] = {m: [] for m in channels}
    n = len(target_train)
    with torch.no_grad():
        for start in range(0, n, batch_size):
            indices = range(start, min(start + batch_size, n))
            batch = _batch_from(target_train, indices, vocab, teacher.scheme, max_len)
            outputs = teacher.encode(batch, train_mode=False)
            by_channel = teacher.channel_probs(outputs, channels)
            for m in channels:
                arr = by_channel[m].cpu().numpy().astype(np.float32)
                for row, positions in enumerate(batch.first_subtoken_index):
                    probs[m].append(arr[row, list(positions)])
    return SoftLabelStore(channels=channels, max_len=max_len, probs=probs)


def soft_label_tensors(
    store: SoftLabelStore,
    sentence_indices: Sequence[int],
    batch: EncodedBatch,
    channel: int,
    n_tags: int,
) -> torch.Tensor:
    """Teacher distributions scattered onto the batch's first-subtoken positions."""
    b, t = batch.subtoken_ids.shape
    target = torch.zeros((b, t, n_tags), dtype=torch.float32)
    for row, sent_idx in enumerate(sentence_indices):
        stored = store.probs[channel][sent_idx]
        positions = list(batch.first_subtoken_index[row])
        if len(positions) != stored.shape[0]:
            raise ConfigurationError(
                "stored soft labels do not align with batch encoding "
                f"({stored.shape[0]} rows vs {len(positions)} positions)"
            )
        if positions:
            target[row, positions] = torch.from_numpy(stored)
    return target


def distill_student(
    teacher: LayeredModel,
    store: SoftLabelStore,
    target_train: Corpus,
    source_train: Corpus,
    target_dev: Corpus,
    *,
    encoder_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    scheme: LabelScheme,
    vocab: SubtokenVocab,
    base_encoder_state: dict[str, torch.Tensor],
    kernel: KernelConfig = KernelConfig(),
) -> TrainResult:
    """Student distillation with parallel domain adaptation.

    Per step: one target batch scored against stored soft labels (L_stu), and,
    when an MMD term is enabled, one equal-size source batch; cross-model MMD
    compares teacher and student CLS populations on that source batch,
    cross-language MMD compares teacher-source and student-target CLS
    populations.  Source labels are never used; the teacher never changes.
    """
    if teacher.config != encoder_cfg:
        raise ConfigurationError("teacher and student encoder configs differ")
    if store.max_len != train_cfg.max_len:
        raise ConfigurationError("soft labels were generated with a different max_len")
    if store.n_sentences() != len(target_train):
        raise ConfigurationError("soft-label store does not cover the target train corpus")

    teacher.eval()
    student = init_student_from(base_encoder_state, encoder_cfg, scheme, train_cfg.seed)
    target_rng = random.Random(train_cfg.seed + 2)
    source_stream = _IndexStream(len(source_train), random.Random(train_cfg.seed + 3))
    needs_source = loss_cfg.use_mmd_model or loss_cfg.use_mmd_language

    steps_per_epoch = math.ceil(len(target_train) / train_cfg.batch_size)
    total_steps = steps_per_epoch * train_cfg.epochs
    optimizer, scheduler = make_optimizer(
        student, train_cfg.lr_student, total_steps, train_cfg.warmup_fraction, train_cfg.weight_decay
    )
    channels = (
        encoder_cfg.active_channels
        if loss_cfg.use_aux_channels
        else (encoder_cfg.main_channel,)
    )
    history: list[dict] = []
    best_f1 = -1.0
    best_epoch = -1
    best_state = None
    step = 0
    for epoch in range(1, train_cfg.epochs + 1):
        for indices in epoch_batches(len(target_train), train_cfg.batch_size, target_rng):
            batch = _batch_from(target_train, indices, vocab, scheme, train_cfg.max_len)
            outputs = student.encode(batch, train_mode=True)
            student_probs = student.channel_probs(outputs, channels)
            valid = batch.valid_mask()
            pairs = {
                m: (
                    soft_label_tensors(store, indices, batch, m, scheme.n_tags),
                    student_probs[m],
                )
                for m in channels
            }
            kd_total, breakdown = losses.student_kd_loss(
                pairs,
                valid,
                student.mixture_weights(),
                loss_cfg,
                encoder_cfg.main_channel,
                encoder_cfg.aux_channels,
            )
            mmd_m = torch.zeros(())
            mmd_l = torch.zeros(())
            if needs_source:
                src_batch = _batch_from(
                    source_train, source_stream.take(len(indices)), vocab, scheme, train_cfg.max_len
                )
                with torch.no_grad():
                    teacher_cls = teacher.encode(src_batch, train_mode=False).cls
                if loss_cfg.use_mmd_model:
                    student_src_cls = student.encode(src_batch, train_mode=True).cls
                    mmd_m = losses.mmd_cross_model(teacher_cls, student_src_cls, kernel)
                if loss_cfg.use_mmd_language:
                    mmd_l = losses.mmd_cross_language(teacher_cls, outputs.cls, kernel)
            total = losses.final_student_loss(kd_total, mmd_m, mmd_l, loss_cfg)
            optimizer.zero_grad(set_to_none=True)
            total.backward()
            optimizer.step()
            scheduler.step()
            step += 1
            history.append(
                {
                    "kind": "step",
                    "phase": "student",
                    "epoch": epoch,
                    "step": step,
                    "l_final": float(total),
                    "l_stu": float(kd_total),
                    "kd_main": float(breakdown["main"]),
                    "kd_aux": float(breakdown["aux"]),
                    "mmd_model": float(mmd_m) if loss_cfg.use_mmd_model else 0.0,
                    "mmd_language": float(mmd_l) if loss_cfg.use_mmd_language else 0.0,
                    "lr": scheduler.get_last_lr()[0],
                    "mixture": _mixture_list(student),
                }
            )
        dev_metrics = evaluate_corpus(
            student, target_dev, vocab, train_cfg.max_len, train_cfg.batch_size
        )
        history.append(
            {
                "kind": "epoch",
                "phase": "student",
                "epoch": epoch,
                "dev_f1": dev_metrics.f1,
                "mixture": _mixture_list(student),
            }
        )
        if dev_metrics.f1 > best_f1:
            best_f1 = dev_metrics.f1
            best_epoch = epoch
            best_state = copy.deepcopy(student.state_dict())
    student.load_state_dict(best_state)
    student.eval()
    return TrainResult(
        model=student,
        history=history,
        best_epoch=best_epoch,
        best_dev_f1=best_f1,
        dev_f1_per_channel={},
        base_encoder_state=base_encoder_state,
    )
