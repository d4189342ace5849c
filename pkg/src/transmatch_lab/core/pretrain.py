"""
Base-class pre-training.

Cross-entropy training of extractor + base head with SGD, momentum, weight
decay and a step learning-rate schedule. Only the extractor crosses the
transfer boundary; the base head is discarded when novel classes arrive.

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from transmatch_lab.core.augmentation import augment_batch
from transmatch_lab.core.checkpoint import Checkpoint
from transmatch_lab.core.errors import ConfigurationError, ContractError
from transmatch_lab.core.networks import (
    CosineHead,
    FeatureExtractor,
    FewShotClassifier,
    LinearHead,
    as_tensor,
)
from transmatch_lab.core.training import (
    EpochLoss,
    build_sgd,
    check_finite,
    has_batch_norm,
    renormalize_head,
    set_batch_norm_eval,
)
from transmatch_lab.models.config import PretrainConfig
from transmatch_lab.models.episode import AugmentationPolicy, ImageDataset

logger = logging.getLogger(__name__)


@dataclass
class PretrainResult:
    """
    Outcome of pre-training.

    Attributes:
        extractor: Trained feature extractor (same object that was passed in)
        head: Trained base head
        checkpoint: Snapshot of extractor + head with training metadata
        loss_trace: Per-epoch mean training loss
        initial_loss / final_loss: Full-dataset loss before / after training (inference mode)
        initial_accuracy / final_accuracy: Full-dataset accuracy before / after
    """
    extractor: FeatureExtractor
    head: nn.Module
    checkpoint: Checkpoint
    loss_trace: List[EpochLoss] = field(default_factory=list)
    initial_loss: float = 0.0
    final_loss: float = 0.0
    initial_accuracy: float = 0.0
    final_accuracy: float = 0.0


def make_base_head(extractor: FeatureExtractor, num_classes: int, config: PretrainConfig,
                   seed: int = 0) -> nn.Module:
    """Linear (default) or cosine head for the base classes."""
    generator = torch.Generator().manual_seed(seed)
    if config.head == "cosine":
        return CosineHead.random(num_classes, extractor.embedding_dim,
                                 scale=config.cosine_scale, generator=generator)
    return LinearHead(extractor.embedding_dim, num_classes)


def pretrain(
    extractor: FeatureExtractor,
    base_head: nn.Module,
    base_dataset: ImageDataset,
    config: PretrainConfig,
    policy: Optional[AugmentationPolicy] = None,
    config_hash: str = ""
) -> PretrainResult:
    """
    Train extractor + base head on the base classes.

    Args:
        extractor: Feature extractor to train in place
        base_head: Head with one output per base class
        base_dataset: Base-class examples, labels 0..C-1
        config: Optimizer and schedule settings
        policy: Optional augmentation applied to every training batch
        config_hash: Stamped into the checkpoint metadata

    Returns:
        PretrainResult with the checkpoint and loss trace

    Raises:
        ConfigurationError: If the dataset is empty, or batch_size is 1 with batch norm
        ContractError: If the head's class count differs from the dataset's
        DivergenceError: If a loss becomes non-finite
    """
    if len(base_dataset) == 0:
        raise ConfigurationError("base dataset is empty")

    model = FewShotClassifier(extractor, base_head)
    if model.way != base_dataset.num_classes:
        raise ContractError(
            f"base head has {model.way} outputs but dataset has "
            f"{base_dataset.num_classes} classes"
        )

    if config.batch_size < 2 and has_batch_norm(model):
        raise ConfigurationError("pretrain.batch_size must be >= 2 with a batch-norm backbone")

    rng = np.random.default_rng(config.seed)
    # lr 0 must leave the model untouched, running statistics included
    frozen = config.learning_rate == 0
    optimizer = build_sgd(
        model,
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        head_lr_multiplier=config.head_lr_multiplier,
    )
    scheduler = torch.optim.lr_scheduler.StepLR(
        optimizer, step_size=config.lr_step_epochs, gamma=config.lr_gamma
    )

    initial_loss, initial_acc = dataset_loss(model, base_dataset)
    logger.info(
        f"Pre-training on {len(base_dataset)} examples / {base_dataset.num_classes} classes "
        f"for {config.epochs} epochs (initial loss {initial_loss:.4f})"
    )

    trace: List[EpochLoss] = []
    labels = torch.as_tensor(base_dataset.labels)
    for epoch in range(config.epochs):
        model.train()
        if frozen:
            set_batch_norm_eval(model)
        order = rng.permutation(len(base_dataset))
        losses = []
        for step, idx in enumerate(batch_indices(order, config.batch_size)):
            images = base_dataset.images[idx]
            if policy is not None:
                images = augment_batch(images, policy, rng)

            logits = model(as_tensor(images, model))
            loss = F.cross_entropy(logits, labels[idx])
            check_finite(loss, "pretrain", epoch, step, optimizer, trace)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            renormalize_head(model)
            losses.append(float(loss.detach()))

        if not losses:
            raise ConfigurationError(f"pre-training epoch {epoch} ran no optimizer step")
        scheduler.step()
        trace.append(EpochLoss(epoch=epoch, loss=float(np.mean(losses)),
                               supervised=float(np.mean(losses))))
        logger.info(f"Pre-train epoch {epoch + 1}/{config.epochs}: loss {trace[-1].loss:.4f}")

    final, final_acc = dataset_loss(model, base_dataset)
    checkpoint = Checkpoint.capture(
        extractor,
        base_head,
        metadata={
            "stage": "pretrain",
            "epochs": config.epochs,
            "seed": config.seed,
            "config_hash": config_hash,
            "initial_loss": initial_loss,
            "final_loss": final,
            "final_accuracy": final_acc,
            "loss_trace": [t.loss for t in trace],
        },
    )
    logger.info(f"Pre-training done: loss {initial_loss:.4f} -> {final:.4f}, "
                f"accuracy {final_acc:.3f}")

    return PretrainResult(
        extractor=extractor,
        head=base_head,
        checkpoint=checkpoint,
        loss_trace=trace,
        initial_loss=initial_loss,
        final_loss=final,
        initial_accuracy=initial_acc,
        final_accuracy=final_acc,
    )


def batch_indices(order: np.ndarray, batch_size: int) -> List[np.ndarray]:
    """
    Consecutive batches of order. A trailing single example joins the previous
    batch, since batch norm cannot estimate statistics from one 1x1 map.
    """
    batches = [order[start:start + batch_size] for start in range(0, len(order), batch_size)]
    if len(batches) > 1 and len(batches[-1]) == 1:
        batches[-2:] = [np.concatenate(batches[-2:])]
    return batches


@torch.no_grad()
def dataset_loss(model: FewShotClassifier, dataset: ImageDataset,
                 batch_size: int = 256) -> Tuple[float, float]:
    """Mean cross-entropy and accuracy over a whole dataset, in inference mode."""
    was_training = model.training
    model.eval()
    total_loss, correct = 0.0, 0
    labels = torch.as_tensor(dataset.labels)
    try:
        for start in range(0, len(dataset), batch_size):
            images = as_tensor(dataset.images[start:start + batch_size], model)
            target = labels[start:start + batch_size]
            logits = model(images)
            total_loss += float(F.cross_entropy(logits, target, reduction="sum"))
            correct += int((logits.argmax(dim=1) == target).sum())
    finally:
        model.train(was_training)
    return total_loss / len(dataset), correct / len(dataset)


def base_training_set(dataset: ImageDataset, split, use_validation_classes: bool) -> ImageDataset:
    """Base classes (plus validation classes when configured), relabeled 0..C-1."""
    classes = sorted(split.base_classes)
    if use_validation_classes:
        classes += sorted(split.validation_classes)
    if not classes:
        raise ConfigurationError("no base classes to pre-train on")
    return dataset.subset(classes)
