"""Command-line surface: synth, train-teacher, distill, evaluate, diagnose, ablate.

Config values resolve as defaults < config file < command-line flags, and every
command echoes its fully resolved config into its output directory so a run
can be reproduced from that file alone.  Exit codes: 0 success, 2 config
error, 3 data error, 4 runtime/numeric error.
"""

from __future__ import annotations

import argparse
import configparser
import dataclasses
import json
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from . import ablation
from .ablation import IMPLICIT_TRANSFER, PRESETS, apply_preset, run_study
from .data import default_scheme, parse_conll, write_conll
from .diagnostics import collect_cls, domain_report, export_embeddings
from .encoding import SubtokenVocab
from .errors import ConfigurationError, DataError, DegenerateInputError
from .evaluation import entity_f1
from .losses import LossConfig
from .model import EncoderConfig, load_checkpoint, save_checkpoint
from .synth import SOURCE_LANGUAGE, TARGET_LANGUAGE, synth_cipher_corpora
from .training import (
    TrainConfig,
    distill_student,
    evaluate_corpus,
    generate_soft_labels,
    predict_corpus,
    train_teacher,
    write_history,
)

OUT_ROOT_ENV = "XLDISTILL_OUT_ROOT"


def desk_loss_config() -> LossConfig:
    """Loss weights for the desk-scale synthetic benchmark.

    The MMD weights are far larger than the full-scale defaults: squared-MMD
    magnitudes and the MSE distillation loss are both much smaller on a tiny
    random-init encoder, so the balance point moves.
    """
    return LossConfig(alpha=0.3, beta=0.3, alpha_prime=0.05, beta_prime=0.05)


@dataclass
class RunConfig:
    """Fully resolved settings for one CLI run."""

    preset: str = "full"
    seed: int = 13
    out_dir: str = "runs/out"
    data_dir: str = "data/synth"
    n_train: int = 1000
    n_dev: int = 200
    n_test: int = 400
    vocab_merges: int = 120
    ablate_seeds: int = 5
    include_implicit_transfer: bool = False
    n_diag_samples: int = 100
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    loss: LossConfig = field(default_factory=LossConfig)

    def resolved_loss(self) -> LossConfig:
        return apply_preset(self.loss, self.preset)

    def resolved_out_dir(self) -> Path:
        out = Path(self.out_dir)
        root = os.environ.get(OUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


def desk_run_config(**overrides) -> RunConfig:
    """Desk-scale defaults: 4-layer random-init encoder, synthetic corpora."""
    cfg = RunConfig(
        encoder=EncoderConfig(),
        train=dataclasses.replace(TrainConfig(), lr_teacher=1e-3, lr_student=1e-3),
        loss=desk_loss_config(),
    )
    for key, value in overrides.items():
        setattr(cfg, key, value)
    return cfg


_SECTIONS = {"encoder": EncoderConfig, "train": TrainConfig, "loss": LossConfig}


def _coerce(raw: str, target_type):
    if target_type is bool:
        lowered = raw.strip().lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigurationError(f"not a boolean: {raw!r}")
    try:
        return target_type(raw)
    except ValueError as exc:
        raise ConfigurationError(f"bad value {raw!r}: {exc}") from exc


def _apply_section(obj, section: configparser.SectionProxy, label: str):
    known = {f.name: f.type for f in fields(obj)}
    types = {"int": int, "float": float, "str": str, "bool": bool}
    for key, raw in section.items():
        if key not in known:
            raise ConfigurationError(f"unknown key {key!r} in section [{label}]")
        declared = known[key]
        target = types.get(declared, None)
        if target is None:
            target = type(getattr(obj, key))
        setattr(obj, key, _coerce(raw, target))


def load_run_config(path=None) -> RunConfig:
    """Desk defaults overridden by an INI-style config file, when given."""
    cfg = desk_run_config()
    if path is None:
        return cfg
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file not found: {path}")
    parser = configparser.ConfigParser()
    parser.read(path, encoding="utf-8")
    for section_name in parser.sections():
        if section_name == "run":
            _apply_section(cfg, parser["run"], "run")
        elif section_name in _SECTIONS:
            _apply_section(getattr(cfg, section_name), parser[section_name], section_name)
        else:
            raise ConfigurationError(f"unknown config section [{section_name}]")
    cfg.encoder.__post_init__()
    cfg.train.__post_init__()
    return cfg


def echo_config(cfg: RunConfig, out_dir: Path) -> Path:
    """Write the fully materialized config; rerunning from it reproduces the run."""
    parser = configparser.ConfigParser()
    run_items = {
        f.name: getattr(cfg, f.name)
        for f in fields(cfg)
        if f.name not in _SECTIONS
    }
    parser["run"] = {k: str(v) for k, v in run_items.items()}
    for section, obj in (("encoder", cfg.encoder), ("train", cfg.train), ("loss", cfg.loss)):
        parser[section] = {k: str(v) for k, v in asdict(obj).items()}
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config.resolved.cfg"
    with path.open("w", encoding="utf-8") as fh:
        parser.write(fh)
    return path


def _config_from_args(args) -> RunConfig:
    cfg = load_run_config(getattr(args, "config", None))
    for name in ("preset", "seed", "out_dir", "data_dir"):
        value = getattr(args, name.replace("-", "_"), None)
        if value is not None:
            setattr(cfg, name, value)
    if getattr(args, "ablate_seeds", None) is not None:
        cfg.ablate_seeds = args.ablate_seeds
    if getattr(args, "include_implicit_transfer", False):
        cfg.include_implicit_transfer = True
    if cfg.preset not in PRESETS:
        raise ConfigurationError(f"unknown preset {cfg.preset!r}")
    cfg.train.seed = cfg.seed
    return cfg


def _corpus_path(cfg: RunConfig, language: str, split: str) -> Path:
    return Path(cfg.data_dir) / f"{language}.{split}.conll"


def _load_side(cfg: RunConfig, language: str, scheme):
    corpora = {}
    for split in ("train", "dev", "test"):
        path = _corpus_path(cfg, language, split)
        if not path.exists():
            raise DataError(f"missing corpus file {path} (run `xldistill synth` first)")
        corpora[split] = parse_conll(path, scheme, language=language, split=split)
    return corpora


def cmd_synth(args) -> int:
    cfg = _config_from_args(args)
    scheme = default_scheme()
    source, target = synth_cipher_corpora(
        cfg.seed, cfg.n_train, cfg.n_dev, cfg.n_test, scheme
    )
    data_dir = Path(cfg.data_dir)
    for side in (source, target):
        for split, corpus in side.by_split().items():
            write_conll(corpus, data_dir / f"{corpus.language}.{split}.conll")
    echo_config(cfg, data_dir)
    print(f"wrote 6 corpus files under {data_dir}")
    return 0


def _build_vocab(cfg: RunConfig, scheme) -> SubtokenVocab:
    train_path = _corpus_path(cfg, SOURCE_LANGUAGE, "train")
    if not train_path.exists():
        raise DataError(f"missing corpus file {train_path}")
    source_train = parse_conll(train_path, scheme, SOURCE_LANGUAGE, "train")
    return SubtokenVocab.train(source_train, cfg.vocab_merges)


def cmd_train_teacher(args) -> int:
    cfg = _config_from_args(args)
    scheme = default_scheme()
    out_dir = cfg.resolved_out_dir()
    echo_config(cfg, out_dir)
    source = _load_side(cfg, SOURCE_LANGUAGE, scheme)
    vocab = _build_vocab(cfg, scheme)
    cfg.encoder.vocab_size = len(vocab)
    loss_cfg = cfg.resolved_loss()
    result = train_teacher(
        source["train"],
        source["dev"],
        encoder_cfg=cfg.encoder,
        train_cfg=cfg.train,
        loss_cfg=loss_cfg,
        scheme=scheme,
        vocab=vocab,
    )
    ckpt_dir = out_dir / "teacher"
    save_checkpoint(
        ckpt_dir,
        result.model,
        vocab,
        meta={
            "role": "teacher",
            "preset": cfg.preset,
            "train": asdict(cfg.train),
            "loss": asdict(loss_cfg),
            "best_epoch": result.best_epoch,
            "best_dev_f1": result.best_dev_f1,
        },
        base_encoder_state=result.base_encoder_state,
    )
    write_history(out_dir / "history.jsonl", result.history)
    table = ["channel  dev_f1"]
    for m, f1 in sorted(result.dev_f1_per_channel.items()):
        marker = " (main)" if m == cfg.encoder.main_channel else ""
        table.append(f"{m:>7d}  {f1:.4f}{marker}")
    (out_dir / "channel_dev_f1.txt").write_text("\n".join(table) + "\n", encoding="utf-8")
    print("\n".join(table))
    print(f"teacher checkpoint: {ckpt_dir} (best epoch {result.best_epoch}, dev F1 {result.best_dev_f1:.4f})")
    return 0


def cmd_distill(args) -> int:
    cfg = _config_from_args(args)
    scheme = default_scheme()
    out_dir = cfg.resolved_out_dir()
    echo_config(cfg, out_dir)
    teacher_ckpt = load_checkpoint(args.teacher)
    vocab = teacher_ckpt.vocab
    cfg.encoder = teacher_ckpt.config
    loss_cfg = cfg.resolved_loss()
    source = _load_side(cfg, SOURCE_LANGUAGE, scheme)
    target = _load_side(cfg, TARGET_LANGUAGE, scheme)
    store = generate_soft_labels(
        teacher_ckpt.model, target["train"], vocab, cfg.train.max_len, cfg.train.batch_size
    )
    result = distill_student(
        teacher_ckpt.model,
        store,
        target["train"],
        source["train"],
        target["dev"],
        encoder_cfg=cfg.encoder,
        train_cfg=cfg.train,
        loss_cfg=loss_cfg,
        scheme=scheme,
        vocab=vocab,
        base_encoder_state=teacher_ckpt.base_encoder_state(),
    )
    ckpt_dir = out_dir / "student"
    save_checkpoint(
        ckpt_dir,
        result.model,
        vocab,
        meta={
            "role": "student",
            "preset": cfg.preset,
            "teacher": str(args.teacher),
            "train": asdict(cfg.train),
            "loss": asdict(loss_cfg),
            "best_epoch": result.best_epoch,
            "best_dev_f1": result.best_dev_f1,
        },
    )
    write_history(out_dir / "history.jsonl", result.history)
    print(f"student checkpoint: {ckpt_dir} (best epoch {result.best_epoch}, target dev F1 {result.best_dev_f1:.4f})")
    return 0


def cmd_evaluate(args) -> int:
    ckpt = load_checkpoint(args.checkpoint)
    scheme = ckpt.scheme
    corpus = parse_conll(args.corpus, scheme, language=args.language, split=args.split)
    if not corpus.labeled:
        raise DataError(f"{args.corpus} has no tag column; nothing to score")
    max_len = int(ckpt.meta.get("train", {}).get("max_len", 128))
    metrics = evaluate_corpus(ckpt.model, corpus, ckpt.vocab, max_len)
    print(metrics.report())
    if args.out_dir is not None:
        out_dir = Path(args.out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        (out_dir / "metrics.json").write_text(
            json.dumps(metrics.to_dict(), indent=2), encoding="utf-8"
        )
        if args.write_predictions:
            pred = predict_corpus(ckpt.model, corpus, ckpt.vocab, max_len)
            lines = []
            for sentence, tags in zip(corpus.sentences, pred):
                for token, tag in zip(sentence.tokens, tags):
                    lines.append(f"{token} {tag}\n")
                lines.append("\n")
            (out_dir / "predictions.conll").write_text("".join(lines), encoding="utf-8")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _config_from_args(args)
    scheme = default_scheme()
    out_dir = cfg.resolved_out_dir()
    echo_config(cfg, out_dir)
    teacher = load_checkpoint(args.teacher)
    student = load_checkpoint(args.student)
    max_len = cfg.train.max_len
    source_train = parse_conll(
        _corpus_path(cfg, SOURCE_LANGUAGE, "train"), scheme, SOURCE_LANGUAGE, "train"
    )
    target_train = parse_conll(
        _corpus_path(cfg, TARGET_LANGUAGE, "train"), scheme, TARGET_LANGUAGE, "train"
    )
    samples = [
        collect_cls(
            ckpt.model,
            corpus,
            cfg.n_diag_samples,
            cfg.seed,
            vocab=ckpt.vocab,
            max_len=max_len,
            model_tag=model_tag,
            language_tag=language_tag,
        )
        for ckpt, model_tag in ((teacher, "teacher"), (student, "student"))
        for corpus, language_tag in ((source_train, "source"), (target_train, "target"))
    ]
    report = domain_report(samples)
    report.write(out_dir / "diagnostics.jsonl")
    export_embeddings(samples, out_dir / "embeddings.tsv")
    print(f"{'pair':<34} {'mmd':>10} {'sym_kl':>10} {'cosine':>8}")
    for record in report.to_records():
        print(
            f"{record['pair']:<34} {record['mmd']:>10.6f} "
            f"{record['sym_kl']:>10.6f} {record['cosine']:>8.4f}"
        )
    print(f"report: {out_dir / 'diagnostics.jsonl'}; embeddings: {out_dir / 'embeddings.tsv'}")
    return 0


def cmd_ablate(args) -> int:
    cfg = _config_from_args(args)
    scheme = default_scheme()
    out_dir = cfg.resolved_out_dir()
    echo_config(cfg, out_dir)
    source = _load_side(cfg, SOURCE_LANGUAGE, scheme)
    target = _load_side(cfg, TARGET_LANGUAGE, scheme)
    vocab = _build_vocab(cfg, scheme)
    cfg.encoder.vocab_size = len(vocab)
    from .synth import CorpusPair

    records = run_study(
        CorpusPair(**source),
        CorpusPair(**target),
        scheme=scheme,
        vocab=vocab,
        encoder_cfg=cfg.encoder,
        train_cfg=cfg.train,
        loss_cfg=cfg.loss,
        seeds=[cfg.seed + i for i in range(cfg.ablate_seeds)],
        include_implicit_transfer=cfg.include_implicit_transfer,
        collect_diagnostics=args.diagnostics,
        log=print,
    )
    with (out_dir / "ablation.jsonl").open("w", encoding="utf-8") as fh:
        for record in records:
            fh.write(json.dumps(dataclasses.asdict(record)) + "\n")
    table = ablation.format_table(ablation.summarize(records))
    (out_dir / "ablation_table.txt").write_text(table + "\n", encoding="utf-8")
    print(table)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="xldistill",
        description="Multi-channel cross-lingual distillation toolkit",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, with_preset=True):
        p.add_argument("--config", help="INI config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--out-dir", dest="out_dir", default=None)
        p.add_argument("--data-dir", dest="data_dir", default=None)
        if with_preset:
            p.add_argument("--preset", choices=sorted(PRESETS), default=None)

    p = sub.add_parser("synth", help="generate the synthetic parallel corpora")
    add_common(p, with_preset=False)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train-teacher", help="train the teacher on labeled source data")
    add_common(p)
    p.set_defaults(func=cmd_train_teacher)

    p = sub.add_parser("distill", help="distill a student from a teacher checkpoint")
    add_common(p)
    p.add_argument("--teacher", required=True, help="teacher checkpoint directory")
    p.set_defaults(func=cmd_distill)

    p = sub.add_parser("evaluate", help="entity-level F1 of a checkpoint on a corpus")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--language", default="tgt")
    p.add_argument("--split", default="test")
    p.add_argument("--out-dir", dest="out_dir", default=None)
    p.add_argument("--write-predictions", action="store_true")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("diagnose", help="domain-discrepancy report and embedding dump")
    add_common(p, with_preset=False)
    p.add_argument("--teacher", required=True)
    p.add_argument("--student", required=True)
    p.set_defaults(func=cmd_diagnose)

    p = sub.add_parser("ablate", help="run all ablation presets over multiple seeds")
    add_common(p, with_preset=False)
    p.add_argument("--ablate-seeds", dest="ablate_seeds", type=int, default=None)
    p.add_argument(
        "--include-implicit-transfer",
        action="store_true",
        help="add the teacher-side language-MMD baseline row",
    )
    p.add_argument("--diagnostics", action="store_true", help="collect per-run domain MMDs")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args) or 0
    except ConfigurationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (DegenerateInputError, FloatingPointError, ArithmeticError, RuntimeError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
