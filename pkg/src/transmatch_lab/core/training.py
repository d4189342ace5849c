"""
Shared training utilities: optimizer construction, divergence checks and
the per-epoch loss trace used by pre-training and fine-tuning.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import List

import torch
import torch.nn as nn

from transmatch_lab.core.errors import DivergenceError
from transmatch_lab.core.networks import CosineHead, FewShotClassifier


@dataclass(frozen=True)
class EpochLoss:
    """
    Mean losses of one training epoch.

    Attributes:
        epoch: Zero-based epoch index
        loss: Mean total loss
        supervised: Mean labeled-part loss (l1 or cross-entropy)
        unsupervised: Mean unlabeled-part loss (l2 or pseudo-label cross-entropy)
        weight: Unlabeled loss weight in effect at the end of the epoch
        accepted_unlabeled: Pseudo-labels accepted over the epoch (Pseudo-Label only)
    """
    epoch: int
    loss: float
    supervised: float = 0.0
    unsupervised: float = 0.0
    weight: float = 0.0
    accepted_unlabeled: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def build_sgd(
    model: FewShotClassifier,
    learning_rate: float,
    momentum: float,
    weight_decay: float,
    head_lr_multiplier: float = 1.0,
    freeze_extractor: bool = False
) -> torch.optim.SGD:
    """
    SGD with three parameter groups.

    - body: convolutional blocks at the base learning rate
    - head: embedding layer + classifier at head_lr_multiplier x base rate
    - scale: the cosine logit scale, head rate, no weight decay

    With freeze_extractor only the classifier head is optimized.
    """
    head_lr = learning_rate * head_lr_multiplier
    scale_params = []
    head_params = []
    for name, p in model.head.named_parameters():
        (scale_params if name == "log_scale" else head_params).append(p)

    groups = []
    if not freeze_extractor:
        groups.append({"params": model.extractor.body_parameters(), "lr": learning_rate,
                       "weight_decay": weight_decay})
        head_params = model.extractor.head_parameters() + head_params
    groups.append({"params": head_params, "lr": head_lr, "weight_decay": weight_decay})
    if scale_params:
        groups.append({"params": scale_params, "lr": head_lr, "weight_decay": 0.0})

    return torch.optim.SGD(groups, lr=learning_rate, momentum=momentum)


def check_finite(
    loss: torch.Tensor,
    stage: str,
    epoch: int,
    step: int,
    optimizer: torch.optim.Optimizer,
    trace: List[EpochLoss]
) -> None:
    """Raise DivergenceError with diagnostics if loss is NaN or infinite."""
    value = float(loss.detach())
    if not math.isfinite(value):
        raise DivergenceError(
            stage=stage,
            epoch=epoch,
            step=step,
            learning_rate=float(optimizer.param_groups[0]["lr"]),
            loss_trace=[t.loss for t in trace],
        )


def has_batch_norm(model: nn.Module) -> bool:
    return any(isinstance(m, nn.modules.batchnorm._BatchNorm) for m in model.modules())


def set_batch_norm_eval(model: nn.Module) -> None:
    """Put every batch-norm layer in inference mode (statistics frozen)."""
    for module in model.modules():
        if isinstance(module, nn.modules.batchnorm._BatchNorm):
            module.eval()


def renormalize_head(model: FewShotClassifier) -> None:
    if isinstance(model.head, CosineHead):
        model.head.renormalize_()
