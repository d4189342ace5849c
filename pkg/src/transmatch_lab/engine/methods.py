"""
The five benchmarked few-shot methods.

    imprinting     imprinted cosine head, no training
    imprinting_ft  imprinted head + supervised fine-tuning on the support set
    mixmatch       random cosine head + MixMatch fine-tuning
    pseudo_label   imprinted head + Pseudo-Label fine-tuning
    transmatch     imprinted head + MixMatch fine-tuning
"""

from __future__ import annotations

import logging

import torch

from transmatch_lab.core.finetune import (
    FinetuneResult,
    finetune_pseudo_label,
    finetune_supervised,
    finetune_transmatch,
)
from transmatch_lab.core.imprint import imprint_from_episode
from transmatch_lab.core.networks import CosineHead, FeatureExtractor, FewShotClassifier
from transmatch_lab.engine.registry import register_method
from transmatch_lab.interfaces import Adaptation
from transmatch_lab.models.config import RunConfig
from transmatch_lab.models.episode import Episode

logger = logging.getLogger(__name__)


class _MethodBase:
    name = ""

    def __init__(self, extractor: FeatureExtractor, config: RunConfig):
        self.extractor = extractor
        self.config = config

    @property
    def method_name(self) -> str:
        return self.name

    def imprinted_head(self, episode: Episode) -> CosineHead:
        imprint = self.config.imprint
        return imprint_from_episode(
            self.extractor,
            episode,
            augmentation_copies=imprint.augmentation_copies,
            policy=self.config.augmentation,
            scale=imprint.scale,
            normalize_first=imprint.normalize_first,
            seed=episode.episode_seed,
            learn_scale=self.config.ssl.learn_scale,
        )

    def random_head(self, episode: Episode) -> CosineHead:
        generator = torch.Generator().manual_seed(episode.episode_seed)
        head = CosineHead.random(episode.way, self.extractor.embedding_dim,
                                 scale=self.config.imprint.scale, generator=generator,
                                 learn_scale=self.config.ssl.learn_scale)
        dtype = next(self.extractor.parameters()).dtype
        return head.to(dtype)

    @staticmethod
    def _adaptation(result: FinetuneResult) -> Adaptation:
        return Adaptation(model=result.evaluation_model,
                          loss_trace=[t.loss for t in result.trace])


@register_method("imprinting")
class ImprintingMethod(_MethodBase):
    """Weight imprinting only."""
    name = "imprinting"

    def adapt(self, episode: Episode) -> Adaptation:
        model = FewShotClassifier(self.extractor, self.imprinted_head(episode))
        return Adaptation(model=model.eval())


@register_method("imprinting_ft")
class ImprintingFinetuneMethod(_MethodBase):
    """Imprinting followed by cross-entropy fine-tuning without unlabeled data."""
    name = "imprinting_ft"

    def adapt(self, episode: Episode) -> Adaptation:
        result = finetune_supervised(self.extractor, self.imprinted_head(episode), episode,
                                     self.config.ssl, policy=self.config.augmentation)
        return self._adaptation(result)


@register_method("mixmatch")
class MixMatchMethod(_MethodBase):
    """MixMatch from a randomly initialized cosine head."""
    name = "mixmatch"

    def adapt(self, episode: Episode) -> Adaptation:
        result = finetune_transmatch(self.extractor, self.random_head(episode), episode,
                                     self.config.ssl, policy=self.config.augmentation)
        return self._adaptation(result)


@register_method("pseudo_label")
class PseudoLabelMethod(_MethodBase):
    """Imprinting followed by Pseudo-Label fine-tuning."""
    name = "pseudo_label"

    def adapt(self, episode: Episode) -> Adaptation:
        result = finetune_pseudo_label(self.extractor, self.imprinted_head(episode), episode,
                                       self.config.ssl, policy=self.config.augmentation)
        return self._adaptation(result)


@register_method("transmatch")
class TransMatchMethod(_MethodBase):
    """Imprinting followed by MixMatch fine-tuning."""
    name = "transmatch"

    def adapt(self, episode: Episode) -> Adaptation:
        result = finetune_transmatch(self.extractor, self.imprinted_head(episode), episode,
                                     self.config.ssl, policy=self.config.augmentation)
        return self._adaptation(result)
