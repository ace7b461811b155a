"""Training objectives.

Every loss averages over labels and then over the batch. Probability-space entry
points clamp to ``[EPS, 1 - EPS]`` before taking logs; the ``*_logits`` variants
compute the same quantities stably and are what the trainer uses.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch
import torch.nn.functional as F

EPS = 1e-12


@dataclass(frozen=True)
class FocalConfig:
    gamma_pos: float = 1.0
    gamma_neg: float = 4.0

    def __post_init__(self):
        if self.gamma_pos < 0 or self.gamma_neg < 0:
            raise ValueError("focal gammas must be >= 0")


def _check_finite(*tensors: torch.Tensor) -> None:
    for t in tensors:
        if torch.isnan(t).any():
            raise ValueError("NaN input to loss")


def _clamp(p: torch.Tensor) -> torch.Tensor:
    return p.clamp(EPS, 1.0 - EPS)


def _reduce(per_label: torch.Tensor, reduction: str) -> torch.Tensor:
    if reduction == "none":
        return per_label
    if reduction == "mean":
        return per_label.mean()
    raise ValueError(f"unknown reduction {reduction!r}")


def bce_sigmoid(probs: torch.Tensor, y: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Binary cross-entropy on sigmoid probabilities."""
    _check_finite(probs)
    p = _clamp(probs)
    y = y.to(p.dtype)
    return _reduce(-(y * torch.log(p) + (1 - y) * torch.log1p(-p)), reduction)


def bce_sigmoid_logits(logits: torch.Tensor, y: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    _check_finite(logits)
    per_label = F.binary_cross_entropy_with_logits(logits, y.to(logits.dtype), reduction="none")
    return _reduce(per_label, reduction)


def per_label_softmax_ce(logits: torch.Tensor, y: torch.Tensor, reduction: str = "mean") -> torch.Tensor:
    """Two-class cross-entropy per label; ``logits[..., 0]`` is the positive class."""
    _check_finite(logits)
    logp = torch.log_softmax(logits, dim=-1)
    y = y.to(logits.dtype)
    return _reduce(-(y * logp[..., 0] + (1 - y) * logp[..., 1]), reduction)


def sequence_ce(logprobs: torch.Tensor) -> torch.Tensor:
    """Negated sum of gold-symbol log-probabilities (last dim), averaged over a batch."""
    if logprobs.numel() == 0:
        raise ValueError("empty log-probability sequence")
    if (logprobs > 0).any():
        raise ValueError("positive log-probability")
    return -logprobs.sum(dim=-1).mean()


def multiclass_ce(simplex: torch.Tensor, gold: torch.Tensor | int) -> torch.Tensor:
    """-log simplex[gold], averaged over a batch."""
    _check_finite(simplex)
    gold = torch.as_tensor(gold, dtype=torch.long)
    picked = simplex.gather(-1, gold.unsqueeze(-1)).squeeze(-1)
    return -torch.log(picked.clamp(min=EPS)).mean()


def multiclass_ce_logits(logits: torch.Tensor, gold: torch.Tensor) -> torch.Tensor:
    _check_finite(logits)
    return F.cross_entropy(logits, gold)


def focal(probs: torch.Tensor, y: torch.Tensor, cfg: FocalConfig = FocalConfig(), reduction: str = "mean") -> torch.Tensor:
    """Focal loss: ``-(1-p)^g+ log p`` on positives, ``-p^g- log(1-p)`` on negatives."""
    _check_finite(probs)
    p = _clamp(probs)
    y = y.to(p.dtype)
    pos = -((1 - p) ** cfg.gamma_pos) * torch.log(p)
    neg = -(p**cfg.gamma_neg) * torch.log1p(-p)
    return _reduce(y * pos + (1 - y) * neg, reduction)


def focal_logits(logits: torch.Tensor, y: torch.Tensor, cfg: FocalConfig = FocalConfig(),
                 reduction: str = "mean") -> torch.Tensor:
    """Focal loss from positive-class logits (``p = sigmoid(logit)``)."""
    _check_finite(logits)
    log_p = F.logsigmoid(logits)
    log_q = F.logsigmoid(-logits)
    y = y.to(logits.dtype)
    pos = -torch.exp(cfg.gamma_pos * log_q) * log_p
    neg = -torch.exp(cfg.gamma_neg * log_p) * log_q
    return _reduce(y * pos + (1 - y) * neg, reduction)
