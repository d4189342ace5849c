"""
Exponential moving average of model parameters.

The shadow is a frozen copy of the model whose parameters follow
shadow <- decay * shadow + (1 - decay) * params after every optimizer step.
It is only used for guessing labels, so it never joins the training graph.
"""

from __future__ import annotations

import copy
from dataclasses import dataclass
from typing import Dict, Mapping, Optional

import torch
import torch.nn as nn

from transmatch_lab.core.errors import ConfigurationError, ContractError


@dataclass
class EmaShadow:
    """
    Shadow parameters mirroring a model's parameter collection.

    Attributes:
        tensors: Parameter name -> shadow tensor (updated in place)
        decay: Weight on the old shadow, in [0, 1]
        module: Frozen model copy whose parameters are the shadow tensors (optional)
    """
    tensors: Dict[str, torch.Tensor]
    decay: float
    module: Optional[nn.Module] = None

    def __post_init__(self):
        if not 0.0 <= self.decay <= 1.0:
            raise ConfigurationError(f"EMA decay must be in [0, 1], got {self.decay}")

    @classmethod
    def track(cls, model: nn.Module, decay: float) -> "EmaShadow":
        """Create a frozen deep copy of model and track its parameters."""
        module = copy.deepcopy(model)
        module.requires_grad_(False)
        tensors = {name: p for name, p in module.named_parameters()}
        return cls(tensors=tensors, decay=decay, module=module)

    def sync_buffers(self, model: nn.Module) -> None:
        """Copy buffers (batch-norm statistics, fixed scales) from the live model."""
        if self.module is None:
            return
        with torch.no_grad():
            for shadow_buf, live_buf in zip(self.module.buffers(), model.buffers()):
                shadow_buf.copy_(live_buf)


def ema_update(shadow: EmaShadow, params: Mapping[str, torch.Tensor]) -> EmaShadow:
    """
    shadow <- decay * shadow + (1 - decay) * params, elementwise, in place.

    Args:
        shadow: EmaShadow to update
        params: Parameter name -> current value (e.g. dict(model.named_parameters()))

    Returns:
        The same shadow, updated

    Raises:
        ContractError: If names or shapes differ from the tracked collection

    Example:
        >>> s = EmaShadow({"w": torch.zeros(2)}, decay=0.9)
        >>> ema_update(s, {"w": torch.ones(2)}).tensors["w"]
        tensor([0.1000, 0.1000])
    """
    if set(params) != set(shadow.tensors):
        missing = sorted(set(shadow.tensors) ^ set(params))
        raise ContractError(f"EMA parameter names differ: {missing}")

    for name, value in params.items():
        target = shadow.tensors[name]
        if target.shape != value.shape:
            raise ContractError(
                f"EMA shape mismatch for '{name}': shadow {tuple(target.shape)} "
                f"vs params {tuple(value.shape)}"
            )

    with torch.no_grad():
        for name, value in params.items():
            target = shadow.tensors[name]
            target.mul_(shadow.decay).add_(value.detach().to(target.dtype),
                                           alpha=1.0 - shadow.decay)
    return shadow
