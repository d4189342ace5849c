"""
Episode-level fine-tuning of a novel-class classifier.

Three procedures share one training loop shape (epochs x batches_per_epoch
SGD steps on a private copy of the extractor and head):

- finetune_transmatch: MixMatch on support + unlabeled pool, labels guessed by
  an EMA snapshot. With a randomly initialized head this is plain MixMatch.
- finetune_pseudo_label: cross-entropy on support plus confidence-gated hard
  pseudo-labels for the unlabeled pool.
- finetune_supervised: cross-entropy on the support set only (Imprinting+FT).

The caller's extractor and head are never modified. All randomness comes from
a numpy Generator seeded by (config.seed, episode.episode_seed), so a run is a
pure function of its inputs.

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import copy
import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from transmatch_lab.core.augmentation import augment_batch
from transmatch_lab.core.ema import EmaShadow, ema_update
from transmatch_lab.core.errors import ConfigurationError, ContractError
from transmatch_lab.core.mixmatch import build_mixmatch_batch, guess_label, mixmatch_loss, one_hot
from transmatch_lab.core.networks import CosineHead, FeatureExtractor, FewShotClassifier, as_tensor
from transmatch_lab.core.training import (
    EpochLoss,
    build_sgd,
    check_finite,
    renormalize_head,
    set_batch_norm_eval,
)
from transmatch_lab.models.config import SslConfig
from transmatch_lab.models.episode import AugmentationPolicy, Episode

logger = logging.getLogger(__name__)


@dataclass
class FinetuneResult:
    """
    Outcome of one fine-tuning run.

    Attributes:
        model: The fine-tuned (live) classifier
        trace: Per-epoch losses
        ema_model: EMA snapshot used for label guessing (TransMatch / MixMatch only)
        evaluate_with_ema: Whether evaluation_model returns the EMA snapshot
    """
    model: FewShotClassifier
    trace: List[EpochLoss] = field(default_factory=list)
    ema_model: Optional[FewShotClassifier] = None
    evaluate_with_ema: bool = False

    @property
    def evaluation_model(self) -> FewShotClassifier:
        if self.evaluate_with_ema and self.ema_model is not None:
            return self.ema_model
        return self.model

    @property
    def final_loss(self) -> Optional[float]:
        return self.trace[-1].loss if self.trace else None


def finetune_transmatch(
    extractor: FeatureExtractor,
    head: CosineHead,
    episode: Episode,
    config: SslConfig,
    policy: Optional[AugmentationPolicy] = None
) -> FinetuneResult:
    """
    MixMatch fine-tuning of an (imprinted) cosine classifier on one episode.

    Each step draws B labeled images with replacement from the support set and
    U_b images from the unlabeled pool, guesses labels for the unlabeled ones
    with the EMA snapshot over M augmentations, mixes everything and minimizes
    l1 + gamma * l2. After each step the EMA is updated and the head rows are
    re-normalized.

    Args:
        extractor: Pre-trained feature extractor (copied, not modified)
        head: Imprinted head, or a random head for the MixMatch-only baseline
        episode: Episode with support set and (optionally empty) unlabeled pool
        config: SslConfig
        policy: Augmentation policy for labeled and unlabeled images

    Returns:
        FinetuneResult with the live model, the EMA model and the loss trace

    Raises:
        ContractError: If the head's way differs from the episode's
        DivergenceError: If the loss becomes non-finite
    """
    model, optimizer = _prepare(extractor, head, episode, config)
    rng = _episode_rng(config, episode)
    ema = EmaShadow.track(model, config.ema_decay)
    pool = episode.unlabeled_pool
    way = episode.way

    epochs = config.epochs_for(episode.unlabeled_per_class)
    total_steps = epochs * config.batches_per_epoch
    trace: List[EpochLoss] = []
    global_step = 0

    for epoch in range(epochs):
        totals, sups, unsups = [], [], []
        weight = config.gamma
        for step in range(config.batches_per_epoch):
            labeled_idx = rng.integers(0, len(episode.support_labels), size=config.batch_labeled)
            labeled_images = episode.support_images[labeled_idx]
            labeled_targets = one_hot(episode.support_labels[labeled_idx], way,
                                      dtype=_dtype(model))

            unlabeled_images, unlabeled_targets = _guessed_unlabeled(
                ema.module, pool, config, policy, rng, way, _dtype(model)
            )

            batch = build_mixmatch_batch(
                labeled_images, labeled_targets, unlabeled_images, unlabeled_targets,
                rng, alpha=config.alpha, policy=policy,
            )

            weight = _ramped(config.gamma, global_step, total_steps, config.gamma_rampup)
            _train_mode(model, config)
            loss, l1, l2 = mixmatch_loss(batch, model, way, weight)
            check_finite(loss, "transmatch", epoch, step, optimizer, trace)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            renormalize_head(model)
            ema_update(ema, dict(model.named_parameters()))
            ema.sync_buffers(model)

            totals.append(float(loss.detach()))
            sups.append(float(l1.detach()))
            unsups.append(float(l2.detach()))
            global_step += 1

        trace.append(EpochLoss(epoch=epoch, loss=float(np.mean(totals)),
                               supervised=float(np.mean(sups)),
                               unsupervised=float(np.mean(unsups)), weight=weight))
        logger.debug(f"Episode {episode.episode_seed} epoch {epoch + 1}/{epochs}: "
                     f"loss {trace[-1].loss:.4f} (l1 {trace[-1].supervised:.4f}, "
                     f"l2 {trace[-1].unsupervised:.4f})")

    model.eval()
    ema.module.eval()
    return FinetuneResult(model=model, trace=trace, ema_model=ema.module,
                          evaluate_with_ema=config.evaluate_with_ema)


def finetune_pseudo_label(
    extractor: FeatureExtractor,
    head: CosineHead,
    episode: Episode,
    config: SslConfig,
    policy: Optional[AugmentationPolicy] = None
) -> FinetuneResult:
    """
    Pseudo-Label fine-tuning.

    Each step the current model labels an unlabeled batch with its argmax;
    predictions whose top probability reaches config.pseudo_label_threshold
    join the cross-entropy with a weight that ramps linearly over epochs, from
    0 in the first epoch to 1 in the last.
    """
    model, optimizer = _prepare(extractor, head, episode, config)
    rng = _episode_rng(config, episode)
    pool = episode.unlabeled_pool
    labels = torch.as_tensor(episode.support_labels, dtype=torch.long)

    epochs = config.epochs_for(episode.unlabeled_per_class)
    trace: List[EpochLoss] = []

    for epoch in range(epochs):
        totals, sups, unsups, accepted = [], [], [], 0
        weight = _linear_ramp(epoch, epochs)
        for step in range(config.batches_per_epoch):
            labeled_idx = rng.integers(0, len(labels), size=config.batch_labeled)
            labeled_images = _augmented(episode.support_images[labeled_idx], policy, rng)

            _train_mode(model, config)
            sup = F.cross_entropy(model(as_tensor(labeled_images, model)),
                                  labels[torch.as_tensor(labeled_idx)])

            unsup = sup.new_zeros(())
            unlabeled_idx = _unlabeled_indices(len(pool), config.batch_unlabeled, rng)
            if len(unlabeled_idx):
                images = _augmented(pool[unlabeled_idx], policy, rng)
                logits = model(as_tensor(images, model))
                confidence, pseudo = logits.detach().softmax(dim=1).max(dim=1)
                mask = confidence >= config.pseudo_label_threshold
                if bool(mask.any()):
                    unsup = F.cross_entropy(logits[mask], pseudo[mask])
                accepted += int(mask.sum())

            loss = sup + weight * unsup
            check_finite(loss, "pseudo_label", epoch, step, optimizer, trace)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            renormalize_head(model)

            totals.append(float(loss.detach()))
            sups.append(float(sup.detach()))
            unsups.append(float(unsup.detach()))

        trace.append(EpochLoss(epoch=epoch, loss=float(np.mean(totals)),
                               supervised=float(np.mean(sups)),
                               unsupervised=float(np.mean(unsups)), weight=weight,
                               accepted_unlabeled=accepted))
        logger.debug(f"Episode {episode.episode_seed} epoch {epoch + 1}/{epochs}: "
                     f"loss {trace[-1].loss:.4f}, {accepted} pseudo-labels accepted")

    model.eval()
    return FinetuneResult(model=model, trace=trace)


def finetune_supervised(
    extractor: FeatureExtractor,
    head: CosineHead,
    episode: Episode,
    config: SslConfig,
    policy: Optional[AugmentationPolicy] = None
) -> FinetuneResult:
    """Cross-entropy fine-tuning on the support set alone; the unlabeled pool is ignored."""
    model, optimizer = _prepare(extractor, head, episode, config)
    rng = _episode_rng(config, episode)
    labels = torch.as_tensor(episode.support_labels, dtype=torch.long)

    epochs = config.epochs_for(episode.unlabeled_per_class)
    trace: List[EpochLoss] = []
    for epoch in range(epochs):
        losses = []
        for step in range(config.batches_per_epoch):
            idx = rng.integers(0, len(labels), size=config.batch_labeled)
            images = _augmented(episode.support_images[idx], policy, rng)

            _train_mode(model, config)
            loss = F.cross_entropy(model(as_tensor(images, model)), labels[torch.as_tensor(idx)])
            check_finite(loss, "supervised", epoch, step, optimizer, trace)

            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            renormalize_head(model)
            losses.append(float(loss.detach()))

        trace.append(EpochLoss(epoch=epoch, loss=float(np.mean(losses)),
                               supervised=float(np.mean(losses))))

    model.eval()
    return FinetuneResult(model=model, trace=trace)


def _prepare(extractor: FeatureExtractor, head: nn.Module, episode: Episode,
             config: SslConfig):
    if not isinstance(head, CosineHead):
        raise ContractError(f"fine-tuning needs a CosineHead, got {type(head).__name__}")
    if head.way != episode.way:
        raise ContractError(f"head is {head.way}-way but the episode is {episode.way}-way")
    if len(episode.support_labels) == 0:
        raise ConfigurationError("episode has an empty support set")

    model = FewShotClassifier(copy.deepcopy(extractor), copy.deepcopy(head))
    if not config.learn_scale and isinstance(model.head.log_scale, nn.Parameter):
        model.head.log_scale.requires_grad_(False)
    if config.freeze_extractor:
        model.extractor.requires_grad_(False)

    optimizer = build_sgd(
        model,
        learning_rate=config.learning_rate,
        momentum=config.momentum,
        weight_decay=config.weight_decay,
        freeze_extractor=config.freeze_extractor,
    )
    return model, optimizer


def _episode_rng(config: SslConfig, episode: Episode) -> np.random.Generator:
    return np.random.default_rng([config.seed, episode.episode_seed])


def _train_mode(model: FewShotClassifier, config: SslConfig) -> None:
    model.train()
    if config.freeze_batch_norm or config.freeze_extractor:
        set_batch_norm_eval(model)


def _dtype(model: nn.Module) -> torch.dtype:
    return next(model.parameters()).dtype


def _augmented(images: np.ndarray, policy: Optional[AugmentationPolicy],
               rng: np.random.Generator) -> np.ndarray:
    return images if policy is None else augment_batch(images, policy, rng)


def _unlabeled_indices(pool_size: int, batch_size: int, rng: np.random.Generator) -> np.ndarray:
    if pool_size == 0 or batch_size == 0:
        return np.empty(0, dtype=np.int64)
    return rng.choice(pool_size, size=batch_size, replace=pool_size < batch_size)


def _guessed_unlabeled(guesser: nn.Module, pool: np.ndarray, config: SslConfig,
                       policy: Optional[AugmentationPolicy], rng: np.random.Generator,
                       way: int, dtype: torch.dtype):
    """Unlabeled batch for MixMatch: all M augmented copies, each with the shared guess."""
    idx = _unlabeled_indices(len(pool), config.batch_unlabeled, rng)
    if len(idx) == 0:
        return np.empty((0,) + pool.shape[1:], dtype=pool.dtype), torch.empty((0, way), dtype=dtype)

    guessed = guess_label(guesser, pool[idx], config.M, config.T, policy, rng)
    images = np.concatenate(guessed.copies)
    targets = guessed.targets.to(dtype).repeat(config.M, 1)
    return images, targets


def _ramped(gamma: float, step: int, total_steps: int, rampup: bool) -> float:
    return gamma * _linear_ramp(step, total_steps) if rampup else gamma


def _linear_ramp(step: int, total_steps: int) -> float:
    """0 at the first step, 1 at the last."""
    if total_steps <= 1:
        return 1.0
    return min(1.0, step / (total_steps - 1))
