"""Training objectives and distribution-distance statistics.

Teacher side: token cross-entropy per channel, mixture-weighted auxiliary sum.
Student side: per-channel MSE against teacher soft labels, plus two squared-MMD
terms that pull the student's sentence representations toward the teacher's
source-language population (cross-model on the same source batch,
cross-language against the student's target batch).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Sequence, Union

import numpy as np
import torch

from .encoding import LABEL_SENTINEL
from .errors import ConfigurationError, DegenerateInputError

ArrayLike = Union[np.ndarray, torch.Tensor, Sequence[float]]


@dataclass
class LossConfig:
    """Objective weights and ablation flags.

    alpha/beta weight the auxiliary channels (teacher/student side),
    alpha_prime/beta_prime weight the cross-model/cross-language MMD terms.
    Each flag removes its component from loss and gradients exactly.
    """

    alpha: float = 0.05
    beta: float = 0.05
    alpha_prime: float = 0.001
    beta_prime: float = 0.001
    use_aux_channels: bool = True
    use_mmd_model: bool = True
    use_mmd_language: bool = True


@dataclass(frozen=True)
class KernelConfig:
    """Gaussian kernel family for MMD; bandwidths are sigma in exp(-d^2 / (2 sigma^2)).

    The "median" sentinel derives sigma^2 from the median pairwise squared
    distance of the joined batch (treated as a data statistic, not part of
    the gradient graph); gaussian-multi spreads five bandwidths around it in
    factor-of-two steps and averages the kernels.
    """

    kind: str = "gaussian-multi"
    bandwidths: Union[tuple[float, ...], str] = "median"

    def __post_init__(self):
        if self.kind not in ("gaussian-single", "gaussian-multi"):
            raise ConfigurationError(f"unknown kernel kind {self.kind!r}")
        if isinstance(self.bandwidths, str):
            if self.bandwidths != "median":
                raise ConfigurationError(f"unknown bandwidth mode {self.bandwidths!r}")
        else:
            object.__setattr__(self, "bandwidths", tuple(float(b) for b in self.bandwidths))
            if any(b <= 0 for b in self.bandwidths):
                raise ConfigurationError("bandwidths must be positive")
            if self.kind == "gaussian-single" and len(self.bandwidths) != 1:
                raise ConfigurationError("gaussian-single takes exactly one bandwidth")


REPORT_KERNEL = KernelConfig(kind="gaussian-multi", bandwidths=(1.0, 2.0, 4.0, 8.0, 16.0))


def ce_channel_loss(probs: torch.Tensor, labels: torch.Tensor) -> torch.Tensor:
    """Mean -log p[gold] over non-sentinel positions of one channel."""
    mask = labels != LABEL_SENTINEL
    if not bool(mask.any()):
        raise DegenerateInputError("no labeled positions in batch")
    safe_labels = labels.clamp(min=0)
    picked = probs.gather(-1, safe_labels.unsqueeze(-1)).squeeze(-1)
    return -(picked[mask].clamp(min=1e-12).log()).mean()


def teacher_loss(
    channel_probs: Mapping[int, torch.Tensor],
    labels: torch.Tensor,
    mixture: Mapping[int, torch.Tensor],
    cfg: LossConfig,
    main_channel: int,
    aux_channels: Sequence[int],
) -> tuple[torch.Tensor, dict]:
    """Supervised objective: main-channel CE plus alpha times the mixture-weighted aux CEs."""
    if main_channel not in channel_probs:
        raise ConfigurationError(f"main channel {main_channel} missing from probs")
    main = ce_channel_loss(channel_probs[main_channel], labels)
    breakdown = {"main": main, "per_channel": {main_channel: main}}
    if not cfg.use_aux_channels:
        breakdown["aux"] = torch.zeros((), dtype=main.dtype)
        return main, breakdown
    aux = torch.zeros((), dtype=main.dtype)
    for m in aux_channels:
        if m not in channel_probs:
            raise ConfigurationError(f"aux channel {m} missing from probs")
        ce = ce_channel_loss(channel_probs[m], labels)
        breakdown["per_channel"][m] = ce
        aux = aux + mixture[m] * ce
    breakdown["aux"] = aux
    return main + cfg.alpha * aux, breakdown


def kd_channel_loss(
    p_teacher: torch.Tensor, p_student: torch.Tensor, valid_mask: torch.Tensor
) -> torch.Tensor:
    """MSE between teacher and student distributions, averaged over classes then valid tokens."""
    if not bool(valid_mask.any()):
        raise DegenerateInputError("no valid positions for distillation")
    diff = p_teacher.detach() - p_student
    per_token = (diff * diff).mean(dim=-1)
    return per_token[valid_mask].mean()


def student_kd_loss(
    channel_pairs: Mapping[int, tuple[torch.Tensor, torch.Tensor]],
    valid_mask: torch.Tensor,
    mixture: Mapping[int, torch.Tensor],
    cfg: LossConfig,
    main_channel: int,
    aux_channels: Sequence[int],
) -> tuple[torch.Tensor, dict]:
    """Distillation objective: main-channel KD plus beta times mixture-weighted aux KDs."""
    if main_channel not in channel_pairs:
        raise ConfigurationError(f"main channel {main_channel} missing from pairs")
    p_t, p_s = channel_pairs[main_channel]
    main = kd_channel_loss(p_t, p_s, valid_mask)
    breakdown = {"main": main, "per_channel": {main_channel: main}}
    if not cfg.use_aux_channels:
        breakdown["aux"] = torch.zeros((), dtype=main.dtype)
        return main, breakdown
    aux = torch.zeros((), dtype=main.dtype)
    for m in aux_channels:
        if m not in channel_pairs:
            raise ConfigurationError(f"aux channel {m} missing from pairs")
        p_t, p_s = channel_pairs[m]
        kd = kd_channel_loss(p_t, p_s, valid_mask)
        breakdown["per_channel"][m] = kd
        aux = aux + mixture[m] * kd
    breakdown["aux"] = aux
    return main + cfg.beta * aux, breakdown


def _as_matrix(x: ArrayLike, name: str) -> torch.Tensor:
    t = torch.as_tensor(x, dtype=torch.get_default_dtype()) if not isinstance(x, torch.Tensor) else x
    if t.ndim != 2:
        raise ConfigurationError(f"{name} must be a 2-D set of vectors, got shape {tuple(t.shape)}")
    if t.shape[0] < 1:
        raise DegenerateInputError(f"{name} is empty")
    return t


def _bandwidth_sq_list(sq_dists_joined: torch.Tensor, kernel: KernelConfig) -> list[torch.Tensor]:
    dtype = sq_dists_joined.dtype
    if isinstance(kernel.bandwidths, str):
        n = sq_dists_joined.shape[0]
        off_diag = sq_dists_joined[~torch.eye(n, dtype=torch.bool)]
        # The bandwidth is a data statistic, not a parameter: detach it.
        base = off_diag.median().detach() if off_diag.numel() else torch.tensor(1.0, dtype=dtype)
        if float(base) <= 0:
            base = torch.tensor(1.0, dtype=dtype)
        if kernel.kind == "gaussian-single":
            return [base]
        return [base * f for f in (0.25, 0.5, 1.0, 2.0, 4.0)]
    return [torch.tensor(b * b, dtype=dtype) for b in kernel.bandwidths]


def _sq_dists(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
    # Explicit expansion instead of cdist: smooth gradients at zero distance
    # (the diagonal is always zero and cdist's sqrt has no gradient there).
    x_sq = (x * x).sum(dim=-1, keepdim=True)
    y_sq = (y * y).sum(dim=-1, keepdim=True).transpose(0, 1)
    return (x_sq + y_sq - 2.0 * (x @ y.transpose(0, 1))).clamp_min(0.0)


def mmd_squared(
    source: ArrayLike, target: ArrayLike, kernel: KernelConfig = KernelConfig()
) -> torch.Tensor:
    """Biased squared-MMD estimator with Gaussian kernels, diagonal terms included.

    (1/M^2) sum G(s_i, s_j) + (1/N^2) sum G(t_i, t_j) - (2/MN) sum G(s_i, t_j)
    """
    s = _as_matrix(source, "source set")
    t = _as_matrix(target, "target set")
    if s.shape[1] != t.shape[1]:
        raise ConfigurationError(
            f"dimension mismatch: {s.shape[1]} vs {t.shape[1]}"
        )
    if s.dtype != t.dtype:
        t = t.to(s.dtype)
    joined = torch.cat([s, t], dim=0)
    sq = _sq_dists(joined, joined)
    bandwidths_sq = _bandwidth_sq_list(sq, kernel)
    kernel_matrix = torch.zeros_like(sq)
    for bw_sq in bandwidths_sq:
        kernel_matrix = kernel_matrix + torch.exp(-sq / (2.0 * bw_sq))
    kernel_matrix = kernel_matrix / len(bandwidths_sq)
    m = s.shape[0]
    k_ss = kernel_matrix[:m, :m]
    k_tt = kernel_matrix[m:, m:]
    k_st = kernel_matrix[:m, m:]
    return k_ss.mean() + k_tt.mean() - 2.0 * k_st.mean()


def mmd_cross_model(
    cls_teacher_src: ArrayLike,
    cls_student_src: ArrayLike,
    kernel: KernelConfig = KernelConfig(),
) -> torch.Tensor:
    """Squared MMD between teacher and student CLS populations on the same source batch.

    The teacher side is detached: gradients only reach the student.
    """
    teacher = _as_matrix(cls_teacher_src, "teacher CLS set").detach()
    return mmd_squared(teacher, cls_student_src, kernel)


def mmd_cross_language(
    cls_teacher_src: ArrayLike,
    cls_student_tgt: ArrayLike,
    kernel: KernelConfig = KernelConfig(),
) -> torch.Tensor:
    """Squared MMD between teacher-source and student-target CLS populations."""
    teacher = _as_matrix(cls_teacher_src, "teacher CLS set").detach()
    return mmd_squared(teacher, cls_student_tgt, kernel)


def final_student_loss(kd, mmd_m, mmd_l, cfg: LossConfig):
    """Total student objective; disabled terms contribute exactly zero."""
    total = kd
    if cfg.use_mmd_model:
        total = total + cfg.alpha_prime * mmd_m
    if cfg.use_mmd_language:
        total = total + cfg.beta_prime * mmd_l
    return total


def sym_kl(p: ArrayLike, q: ArrayLike, eps: float = 1e-8) -> float:
    """Symmetric KL divergence KL(p||q) + KL(q||p) after eps-smoothing.

    Diagnostic only: inputs are probability vectors; smoothing avoids
    infinities from exact zeros.
    """
    p = np.asarray(p, dtype=np.float64)
    q = np.asarray(q, dtype=np.float64)
    if p.shape != q.shape or p.ndim != 1:
        raise ConfigurationError(f"shape mismatch: {p.shape} vs {q.shape}")
    if (p < 0).any() or (q < 0).any():
        raise ValueError("probability vectors must be nonnegative")
    for name, vec in (("p", p), ("q", q)):
        if abs(vec.sum() - 1.0) > 1e-6:
            raise ValueError(f"{name} must sum to 1 (got {vec.sum()!r})")
    p = (p + eps) / (p + eps).sum()
    q = (q + eps) / (q + eps).sum()
    return float(np.sum(p * np.log(p / q)) + np.sum(q * np.log(q / p)))


def cosine_sim(u: ArrayLike, v: ArrayLike) -> float:
    """Cosine similarity of two non-zero vectors."""
    u = np.asarray(u, dtype=np.float64).ravel()
    v = np.asarray(v, dtype=np.float64).ravel()
    if u.shape != v.shape:
        raise ConfigurationError(f"shape mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0.0 or nv == 0.0:
        raise DegenerateInputError("cosine similarity undefined for zero vectors")
    return float(np.dot(u, v) / (nu * nv))
