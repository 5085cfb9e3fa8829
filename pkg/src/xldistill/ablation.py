"""Ablation study runner: presets by component, multi-seed means, diagnostics.

Presets toggle the three components (auxiliary channels, cross-model MMD,
cross-language MMD).  Within one seed, presets sharing a teacher configuration
reuse the same trained teacher, so preset differences isolate the student-side
change; `baseline` disables everything and is a plain single-channel distiller.
"""

from __future__ import annotations

import dataclasses
import statistics
import time
from dataclasses import dataclass, field

from .data import Corpus, LabelScheme
from .diagnostics import DiagnosticsReport, collect_cls, domain_report
from .encoding import SubtokenVocab
from .errors import ConfigurationError
from .losses import LossConfig
from .model import EncoderConfig, LayeredModel
from .synth import CorpusPair
from .training import (
    TrainConfig,
    TrainResult,
    distill_student,
    evaluate_corpus,
    generate_soft_labels,
    train_teacher,
    train_teacher_with_language_mmd,
)

PRESETS: dict[str, dict[str, bool]] = {
    "full": dict(use_aux_channels=True, use_mmd_model=True, use_mmd_language=True),
    "no_distillers": dict(use_aux_channels=False, use_mmd_model=True, use_mmd_language=True),
    "no_mmd_language": dict(use_aux_channels=True, use_mmd_model=True, use_mmd_language=False),
    "no_mmd_model": dict(use_aux_channels=True, use_mmd_model=False, use_mmd_language=True),
    "baseline": dict(use_aux_channels=False, use_mmd_model=False, use_mmd_language=False),
}

IMPLICIT_TRANSFER = "implicit_transfer"

DIAG_SAMPLE_SEED = 1234
DIAG_SAMPLES = 100


def apply_preset(loss_cfg: LossConfig, preset: str) -> LossConfig:
    """Copy of the loss config with the preset's three ablation flags applied."""
    if preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {preset!r} (choose from {sorted(PRESETS)})")
    return dataclasses.replace(loss_cfg, **PRESETS[preset])


@dataclass
class RunRecord:
    """Outcome of one (preset, seed) pipeline run."""

    preset: str
    seed: int
    test_f1: float
    student_dev_f1: float
    teacher_dev_f1: float
    diagnostics: dict[str, float] = field(default_factory=dict)
    seconds: float = 0.0


def _diagnostic_mmds(
    teacher: LayeredModel,
    student: LayeredModel,
    source_train: Corpus,
    target_train: Corpus,
    vocab: SubtokenVocab,
    max_len: int,
) -> dict[str, float]:
    samples = [
        collect_cls(
            model,
            corpus,
            DIAG_SAMPLES,
            DIAG_SAMPLE_SEED,
            vocab=vocab,
            max_len=max_len,
            model_tag=model_tag,
            language_tag=language_tag,
        )
        for model, model_tag in ((teacher, "teacher"), (student, "student"))
        for corpus, language_tag in ((source_train, "source"), (target_train, "target"))
    ]
    report = domain_report(samples)
    return {f"{a}--{b}": m.mmd for (a, b), m in report.pairs.items()}


def run_study(
    source: CorpusPair,
    target: CorpusPair,
    *,
    scheme: LabelScheme,
    vocab: SubtokenVocab,
    encoder_cfg: EncoderConfig,
    train_cfg: TrainConfig,
    loss_cfg: LossConfig,
    seeds: list[int],
    presets: list[str] | None = None,
    include_implicit_transfer: bool = False,
    implicit_weight: float | None = None,
    collect_diagnostics: bool = False,
    log=None,
) -> list[RunRecord]:
    """Run every (preset, seed) pipeline; teachers are shared within a seed.

    The optional implicit-transfer row trains the single-channel teacher with
    a language-MMD penalty and then runs a plain distillation, for comparison
    against `no_distillers` (explicit transfer during distillation).
    """
    presets = list(presets) if presets is not None else list(PRESETS)
    for p in presets:
        if p not in PRESETS:
            raise ConfigurationError(f"unknown preset {p!r}")
    implicit_weight = (
        implicit_weight if implicit_weight is not None else loss_cfg.beta_prime
    )
    records: list[RunRecord] = []
    for seed in seeds:
        run_cfg = dataclasses.replace(train_cfg, seed=seed)
        teachers: dict[str, tuple[TrainResult, object]] = {}

        def get_teacher(key: str) -> tuple[TrainResult, object]:
            if key in teachers:
                return teachers[key]
            cfg = apply_preset(loss_cfg, "full" if key == "aux" else "baseline")
            if key == "mmd":
                result = train_teacher_with_language_mmd(
                    source.train,
                    source.dev,
                    target.train,
                    implicit_weight,
                    encoder_cfg=encoder_cfg,
                    train_cfg=run_cfg,
                    loss_cfg=cfg,
                    scheme=scheme,
                    vocab=vocab,
                )
            else:
                result = train_teacher(
                    source.train,
                    source.dev,
                    encoder_cfg=encoder_cfg,
                    train_cfg=run_cfg,
                    loss_cfg=cfg,
                    scheme=scheme,
                    vocab=vocab,
                )
            store = generate_soft_labels(
                result.model, target.train, vocab, run_cfg.max_len, run_cfg.batch_size
            )
            teachers[key] = (result, store)
            return teachers[key]

        jobs = [(p, apply_preset(loss_cfg, p)) for p in presets]
        if include_implicit_transfer:
            jobs.append((IMPLICIT_TRANSFER, apply_preset(loss_cfg, "baseline")))
        for name, cfg in jobs:
            started = time.time()
            if name == IMPLICIT_TRANSFER:
                teacher_key = "mmd"
            else:
                teacher_key = "aux" if cfg.use_aux_channels else "plain"
            teacher_result, store = get_teacher(teacher_key)
            student_result = distill_student(
                teacher_result.model,
                store,
                target.train,
                source.train,
                target.dev,
                encoder_cfg=encoder_cfg,
                train_cfg=run_cfg,
                loss_cfg=cfg,
                scheme=scheme,
                vocab=vocab,
                base_encoder_state=teacher_result.base_encoder_state,
            )
            test_f1 = evaluate_corpus(
                student_result.model, target.test, vocab, run_cfg.max_len, run_cfg.batch_size
            ).f1
            diagnostics = {}
            if collect_diagnostics:
                diagnostics = _diagnostic_mmds(
                    teacher_result.model,
                    student_result.model,
                    source.train,
                    target.train,
                    vocab,
                    run_cfg.max_len,
                )
            record = RunRecord(
                preset=name,
                seed=seed,
                test_f1=test_f1,
                student_dev_f1=student_result.best_dev_f1,
                teacher_dev_f1=teacher_result.best_dev_f1,
                diagnostics=diagnostics,
                seconds=time.time() - started,
            )
            records.append(record)
            if log is not None:
                log(
                    f"seed={seed} preset={name}: test F1 {test_f1:.4f} "
                    f"(teacher dev {teacher_result.best_dev_f1:.4f}, {record.seconds:.0f}s)"
                )
    return records


def summarize(records: list[RunRecord]) -> dict[str, dict[str, float]]:
    """Mean and standard deviation of test F1 per preset."""
    by_preset: dict[str, list[float]] = {}
    for r in records:
        by_preset.setdefault(r.preset, []).append(r.test_f1)
    summary = {}
    for preset, values in by_preset.items():
        summary[preset] = {
            "mean_f1": statistics.fmean(values),
            "std_f1": statistics.stdev(values) if len(values) > 1 else 0.0,
            "n": len(values),
        }
    return summary


def format_table(summary: dict[str, dict[str, float]]) -> str:
    order = list(PRESETS) + [IMPLICIT_TRANSFER]
    lines = [f"{'preset':<18} {'mean_f1':>8} {'std_f1':>8} {'n':>3}"]
    for preset in order:
        if preset not in summary:
            continue
        row = summary[preset]
        lines.append(
            f"{preset:<18} {row['mean_f1']:>8.4f} {row['std_f1']:>8.4f} {row['n']:>3d}"
        )
    return "\n".join(lines)
