"""Layered encoder with per-layer channel terminals and trainable mixture weights.

One structure, instantiated twice: the teacher is trained on labeled source
data, the student is distilled from the teacher's per-layer soft labels.
Every non-frozen layer m carries a `ChannelTerminal` (softmax classifier); the
terminal on the last layer is the main channel, the rest are auxiliary
channels weighted by the trainable mixture vector.
"""

from __future__ import annotations

import copy
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .data import LabelScheme
from .encoding import CLS_ID, EncodedBatch, SubtokenVocab
from .errors import ConfigurationError


@dataclass
class EncoderConfig:
    """Encoder shape; defaults are the desk-scale setup trained from random init.

    A full-scale multilingual run would use 12 layers, hidden 768, 12 heads,
    and 3 frozen bottom layers; anything matching these fields can be loaded
    through the same checkpoint interface.
    """

    n_layers: int = 4
    hidden_dim: int = 64
    n_heads: int = 4
    n_frozen: int = 1
    vocab_size: int = 0
    dropout: float = 0.1
    max_positions: int = 128
    ffn_dim: int = 0

    def __post_init__(self):
        if not 0 <= self.n_frozen < self.n_layers:
            raise ConfigurationError(
                f"n_frozen={self.n_frozen} must satisfy 0 <= n_frozen < n_layers={self.n_layers}"
            )
        if self.hidden_dim % self.n_heads:
            raise ConfigurationError(
                f"hidden_dim={self.hidden_dim} not divisible by n_heads={self.n_heads}"
            )
        if self.ffn_dim == 0:
            self.ffn_dim = 4 * self.hidden_dim

    @property
    def main_channel(self) -> int:
        return self.n_layers

    @property
    def active_channels(self) -> tuple[int, ...]:
        """Layers carrying a terminal: every non-frozen layer, 1-indexed."""
        return tuple(range(self.n_frozen + 1, self.n_layers + 1))

    @property
    def aux_channels(self) -> tuple[int, ...]:
        """Active channels below the main one; these get mixture weights."""
        return tuple(range(self.n_frozen + 1, self.n_layers))


@dataclass
class LayerOutputs:
    """Per-layer hidden states [B, T, H] for layers 1..n_layers plus final-layer CLS."""

    hidden: list[torch.Tensor]
    cls: torch.Tensor

    def layer(self, m: int) -> torch.Tensor:
        return self.hidden[m - 1]


class ChannelTerminal(nn.Module):
    """Per-layer softmax classifier: probabilities over the tag set per token."""

    def __init__(self, hidden_dim: int, n_tags: int):
        super().__init__()
        self.linear = nn.Linear(hidden_dim, n_tags)

    def forward(self, hidden: torch.Tensor) -> torch.Tensor:
        return F.softmax(self.linear(hidden), dim=-1)


def channel_forward(terminal: ChannelTerminal, hidden: torch.Tensor) -> torch.Tensor:
    """Token-level probability matrix from one channel terminal."""
    return terminal(hidden)


class _Block(nn.Module):
    """Post-LN transformer block (fused QKV; lean enough for 1-core CPU training)."""

    def __init__(self, cfg: EncoderConfig):
        super().__init__()
        d = cfg.hidden_dim
        self.n_heads = cfg.n_heads
        self.head_dim = d // cfg.n_heads
        self.qkv = nn.Linear(d, 3 * d)
        self.attn_out = nn.Linear(d, d)
        self.ff1 = nn.Linear(d, cfg.ffn_dim)
        self.ff2 = nn.Linear(cfg.ffn_dim, d)
        self.norm1 = nn.LayerNorm(d)
        self.norm2 = nn.LayerNorm(d)
        self.dropout = cfg.dropout

    def forward(self, x: torch.Tensor, pad_mask: torch.Tensor) -> torch.Tensor:
        b, t, d = x.shape
        q, k, v = self.qkv(x).chunk(3, dim=-1)
        q = q.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        k = k.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        v = v.view(b, t, self.n_heads, self.head_dim).transpose(1, 2)
        attn = F.scaled_dot_product_attention(q, k, v, attn_mask=pad_mask[:, None, None, :])
        attn = attn.transpose(1, 2).reshape(b, t, d)
        x = self.norm1(x + F.dropout(self.attn_out(attn), self.dropout, self.training))
        ff = self.ff2(F.relu(self.ff1(x)))
        x = self.norm2(x + F.dropout(ff, self.dropout, self.training))
        return x


class LayeredModel(nn.Module):
    """Encoder + one terminal per active channel + mixture weights over aux channels."""

    def __init__(self, config: EncoderConfig, scheme: LabelScheme):
        super().__init__()
        if config.vocab_size < 1:
            raise ConfigurationError("vocab_size must be set before building a model")
        self.config = config
        self.scheme = scheme
        d = config.hidden_dim
        self.token_embedding = nn.Embedding(config.vocab_size, d)
        self.position_embedding = nn.Embedding(config.max_positions, d)
        self.embed_norm = nn.LayerNorm(d)
        self.blocks = nn.ModuleList(_Block(config) for _ in range(config.n_layers))
        self.terminals = nn.ModuleDict(
            {str(m): ChannelTerminal(d, scheme.n_tags) for m in config.active_channels}
        )
        self.mixture = nn.Parameter(torch.ones(len(config.aux_channels)))
        self._apply_freezing()

    def _apply_freezing(self):
        if self.config.n_frozen > 0:
            for p in self.token_embedding.parameters():
                p.requires_grad_(False)
            for p in self.position_embedding.parameters():
                p.requires_grad_(False)
            for p in self.embed_norm.parameters():
                p.requires_grad_(False)
        for i in range(self.config.n_frozen):
            for p in self.blocks[i].parameters():
                p.requires_grad_(False)

    def encode(self, batch: EncodedBatch, train_mode: bool = False) -> LayerOutputs:
        """Run the encoder, returning every layer's hidden states.

        Padded keys are masked out of attention, so outputs at real positions
        do not depend on padding content or amount.
        """
        ids = batch.subtoken_ids
        if ids.shape[1] > self.config.max_positions:
            raise ConfigurationError(
                f"sequence length {ids.shape[1]} exceeds max_positions={self.config.max_positions}"
            )
        was_training = self.training
        self.train(train_mode)
        try:
            pad_mask = batch.attention_mask.bool()
            positions = torch.arange(ids.shape[1], device=ids.device)
            x = self.token_embedding(ids) + self.position_embedding(positions)[None]
            x = self.embed_norm(x)
            x = F.dropout(x, self.config.dropout, self.training)
            hidden = []
            for block in self.blocks:
                x = block(x, pad_mask)
                hidden.append(x)
            return LayerOutputs(hidden=hidden, cls=hidden[-1][:, 0])
        finally:
            self.train(was_training)

    def channel_probs(
        self, outputs: LayerOutputs, channels: Sequence[int] | None = None
    ) -> dict[int, torch.Tensor]:
        """Probability matrices for the requested channels (default: all active)."""
        channels = tuple(channels) if channels is not None else self.config.active_channels
        probs = {}
        for m in channels:
            key = str(m)
            if key not in self.terminals:
                raise ConfigurationError(f"no terminal on layer {m}")
            probs[m] = self.terminals[key](outputs.layer(m))
        return probs

    def mixture_weights(self) -> dict[int, torch.Tensor]:
        return {m: self.mixture[i] for i, m in enumerate(self.config.aux_channels)}

    def encoder_state_dict(self) -> dict[str, torch.Tensor]:
        """Encoder parameters only (no terminals, no mixture), for base-init sharing."""
        return {
            k: v.detach().clone()
            for k, v in self.state_dict().items()
            if not k.startswith("terminals.") and k != "mixture"
        }

    def load_encoder_state(self, state: dict[str, torch.Tensor]) -> None:
        missing, unexpected = self.load_state_dict(state, strict=False)
        unexpected = [k for k in unexpected]
        missing = [k for k in missing if not k.startswith("terminals.") and k != "mixture"]
        if missing or unexpected:
            raise ConfigurationError(
                f"encoder state mismatch (missing={missing}, unexpected={unexpected})"
            )


def build_model(config: EncoderConfig, scheme: LabelScheme, seed: int) -> LayeredModel:
    """Deterministically initialized model; same (config, seed) gives identical weights."""
    torch.manual_seed(seed)
    return LayeredModel(config, scheme)


def init_student_from(
    base_encoder_state: dict[str, torch.Tensor],
    config: EncoderConfig,
    scheme: LabelScheme,
    seed: int,
) -> LayeredModel:
    """Student with the teacher's base encoder init, fresh terminals, mixture at 1."""
    student = build_model(config, scheme, seed)
    student.load_encoder_state(base_encoder_state)
    return student


def predict_tags(model: LayeredModel, batch: EncodedBatch) -> list[list[str]]:
    """Main-channel argmax at first-subtoken positions, mapped back to words.

    Ties break toward the lowest tag index (numpy argmax keeps the first
    maximal entry).
    """
    with torch.no_grad():
        outputs = model.encode(batch, train_mode=False)
        probs = model.channel_probs(outputs, channels=[model.config.main_channel])
        main = probs[model.config.main_channel].cpu().numpy()
    tags = []
    for row, positions in enumerate(batch.first_subtoken_index):
        indices = np.argmax(main[row, list(positions)], axis=-1) if positions else []
        tags.append([model.scheme.index_to_tag(int(i)) for i in indices])
    return tags


def parameter_hash(model: nn.Module, only_frozen: bool = False) -> str:
    """SHA-256 over named parameters; detects any bitwise change."""
    digest = hashlib.sha256()
    for name, param in sorted(model.named_parameters()):
        if only_frozen and param.requires_grad:
            continue
        digest.update(name.encode())
        digest.update(param.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


def _atomic_torch_save(obj, path: Path) -> None:
    tmp = path.with_name(path.name + ".tmp")
    torch.save(obj, tmp)
    os.replace(tmp, path)


def save_checkpoint(
    directory,
    model: LayeredModel,
    vocab: SubtokenVocab,
    meta: dict | None = None,
    base_encoder_state: dict[str, torch.Tensor] | None = None,
) -> Path:
    """Self-describing checkpoint directory: weights, vocab, config, label scheme."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    _atomic_torch_save(model.state_dict(), directory / "weights.pt")
    if base_encoder_state is not None:
        _atomic_torch_save(base_encoder_state, directory / "base_encoder.pt")
    vocab.save(directory / "vocab.json")
    payload = {
        "encoder": asdict(model.config),
        "entity_types": list(model.scheme.entity_types),
        "meta": meta or {},
    }
    tmp = directory / "config.json.tmp"
    tmp.write_text(json.dumps(payload, indent=2), encoding="utf-8")
    os.replace(tmp, directory / "config.json")
    return directory


@dataclass
class LoadedCheckpoint:
    model: LayeredModel
    vocab: SubtokenVocab
    scheme: LabelScheme
    config: EncoderConfig
    meta: dict
    path: Path

    def base_encoder_state(self) -> dict[str, torch.Tensor]:
        base_path = self.path / "base_encoder.pt"
        if not base_path.exists():
            raise ConfigurationError(f"{base_path} missing; cannot init a student")
        return torch.load(base_path, weights_only=True)


def load_checkpoint(directory) -> LoadedCheckpoint:
    directory = Path(directory)
    config_path = directory / "config.json"
    if not config_path.exists():
        raise ConfigurationError(f"{directory} is not a checkpoint (no config.json)")
    payload = json.loads(config_path.read_text(encoding="utf-8"))
    config = EncoderConfig(**payload["encoder"])
    scheme = LabelScheme(tuple(payload["entity_types"]))
    vocab = SubtokenVocab.load(directory / "vocab.json")
    model = LayeredModel(config, scheme)
    state = torch.load(directory / "weights.pt", weights_only=True)
    model.load_state_dict(state)
    model.eval()
    return LoadedCheckpoint(
        model=model,
        vocab=vocab,
        scheme=scheme,
        config=config,
        meta=payload.get("meta", {}),
        path=directory,
    )
