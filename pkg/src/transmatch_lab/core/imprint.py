"""
Classifier-weight imprinting for novel classes.

Each class weight is the normalized mean of the class's support embeddings:
w_c = normalize(mean_k normalize(f^e(x_k^c))). With unit-norm weights and
embeddings, the cosine head then classifies by similarity to the class means.

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np
import torch
import torch.nn.functional as F

from transmatch_lab.core.augmentation import augment
from transmatch_lab.core.errors import ConfigurationError, ContractError, DegenerateClassError
from transmatch_lab.core.networks import NORM_EPS, CosineHead, FeatureExtractor, embed
from transmatch_lab.models.episode import AugmentationPolicy, Episode

logger = logging.getLogger(__name__)


@dataclass
class SupportEmbeddings:
    """
    Embeddings of the support set grouped by episode class 0..N-1.

    Attributes:
        per_class: One (k_c, d) tensor per class, k_c >= 1
    """
    per_class: List[torch.Tensor]

    def __post_init__(self):
        if not self.per_class:
            raise ContractError("support embeddings need at least one class")

        dims = {t.shape[-1] for t in self.per_class}
        if len(dims) != 1:
            raise ContractError(f"support embeddings have mixed dimensions {sorted(dims)}")

        for c, t in enumerate(self.per_class):
            if t.dim() != 2 or t.shape[0] == 0:
                raise ContractError(f"class {c} needs a non-empty (k, d) embedding matrix")

    @property
    def way(self) -> int:
        return len(self.per_class)

    @property
    def dim(self) -> int:
        return self.per_class[0].shape[-1]


def imprint_weights(
    support: SupportEmbeddings,
    scale: float = 10.0,
    normalize_first: bool = True,
    learn_scale: bool = True
) -> CosineHead:
    """
    Build a cosine head whose row c is the normalized mean of class c's embeddings.

    Args:
        support: Per-class support embeddings
        scale: Logit scale of the new head
        normalize_first: Normalize each embedding before averaging; False
                         averages raw embeddings (ablation)
        learn_scale: Whether the head's scale is trainable

    Returns:
        CosineHead with unit-norm rows

    Raises:
        DegenerateClassError: If a class mean has norm <= 1e-8 (names the class)

    Example:
        >>> head = imprint_weights(SupportEmbeddings([torch.tensor([[1., 0.], [0., 1.]])]))
        >>> head.weight
        tensor([[0.7071, 0.7071]])
    """
    rows = []
    for c, embeddings in enumerate(support.per_class):
        if normalize_first:
            norms = embeddings.norm(dim=1, keepdim=True)
            if bool((norms <= NORM_EPS).any()):
                raise DegenerateClassError(c, float(norms.min()))
            embeddings = embeddings / norms

        mean = embeddings.mean(dim=0)
        norm = float(mean.norm())
        if norm <= NORM_EPS:
            raise DegenerateClassError(c, norm)
        rows.append(mean / norm)

    return CosineHead(torch.stack(rows), scale=scale, learn_scale=learn_scale)


def support_embeddings(
    extractor: FeatureExtractor,
    episode: Episode,
    augmentation_copies: int = 10,
    policy: Optional[AugmentationPolicy] = None,
    seed: int = 0
) -> SupportEmbeddings:
    """
    Embed every support image plus `augmentation_copies` augmented versions of it.

    The original image is always included, so each class gets K * (A + 1)
    embeddings.
    """
    if augmentation_copies < 0:
        raise ConfigurationError(f"augmentation_copies must be >= 0, got {augmentation_copies}")
    if len(episode.support_labels) == 0:
        raise ContractError("episode has an empty support set")

    images = [episode.support_images]
    if augmentation_copies > 0 and policy is not None and not policy.is_identity:
        rng = np.random.default_rng(seed)
        for _ in range(augmentation_copies):
            seeds = rng.integers(0, 2**31 - 1, size=len(episode.support_images))
            images.append(np.stack([
                augment(img, policy, int(s)) for img, s in zip(episode.support_images, seeds)
            ]))
    elif augmentation_copies > 0:
        # identity augmentation: copies equal the original
        images += [episode.support_images] * augmentation_copies

    stacked = np.concatenate(images)
    labels = np.tile(episode.support_labels, len(images))
    features = embed(extractor, stacked)

    return SupportEmbeddings([features[torch.as_tensor(labels == c)]
                              for c in range(episode.way)])


def imprint_from_episode(
    extractor: FeatureExtractor,
    episode: Episode,
    augmentation_copies: int = 10,
    policy: Optional[AugmentationPolicy] = None,
    scale: float = 10.0,
    normalize_first: bool = True,
    seed: int = 0,
    learn_scale: bool = True
) -> CosineHead:
    """
    Imprint an N-way cosine head from an episode's support set.

    Each support image contributes its own embedding plus those of A augmented
    copies; all are normalized, averaged per class and renormalized.
    """
    support = support_embeddings(extractor, episode, augmentation_copies, policy, seed)
    head = imprint_weights(support, scale=scale, normalize_first=normalize_first,
                           learn_scale=learn_scale)
    logger.debug(
        f"Imprinted {head.way}-way head from {len(episode.support_labels)} support images "
        f"x {augmentation_copies + 1} views"
    )
    return head


def nearest_support_labels(support: SupportEmbeddings, queries: torch.Tensor) -> torch.Tensor:
    """
    Brute-force classification by mean cosine similarity to each class's embeddings.

    Reference classifier for checking imprinted heads.
    """
    q = F.normalize(queries, dim=1)
    scores = torch.stack([
        (q @ F.normalize(emb, dim=1).t()).mean(dim=1) for emb in support.per_class
    ], dim=1)
    return scores.argmax(dim=1)
