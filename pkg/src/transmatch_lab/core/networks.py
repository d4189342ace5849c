"""
Feature extractor, cosine classifier head and the few-shot classifier.

The cosine head scores an embedding x against unit-norm class weights:
score_c = scale * cos(w_c, x). Imprinting writes class directions straight
into its weight rows.

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import logging
from typing import Optional, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from transmatch_lab.core.errors import ContractError, DegenerateVectorError
from transmatch_lab.models.config import BackboneSpec

logger = logging.getLogger(__name__)

NORM_EPS = 1e-8


class FeatureExtractor(nn.Module):
    """
    Desk-scale convolutional feature extractor f^e.

    Conv blocks (conv3x3, optional batch norm, ReLU, 2x2 max-pool), global
    average pooling, then a fully connected embedding layer of size d. The
    output is NOT normalized; the cosine head normalizes.

    Args:
        spec: BackboneSpec with channel widths and embedding size

    Example:
        >>> extractor = FeatureExtractor(BackboneSpec(in_channels=3, embedding_dim=64))
        >>> extractor(torch.zeros(2, 3, 16, 16)).shape
        torch.Size([2, 64])
    """

    def __init__(self, spec: BackboneSpec):
        super().__init__()
        self.spec = spec

        blocks = []
        in_channels = spec.in_channels
        for width in spec.widths:
            layers = [nn.Conv2d(in_channels, width, kernel_size=3, padding=1,
                                bias=not spec.batch_norm)]
            if spec.batch_norm:
                layers.append(nn.BatchNorm2d(width))
            layers += [nn.ReLU(inplace=True), nn.MaxPool2d(2, ceil_mode=True)]
            blocks.append(nn.Sequential(*layers))
            in_channels = width

        self.blocks = nn.Sequential(*blocks)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.embedding = nn.Linear(in_channels, spec.embedding_dim)

    @property
    def embedding_dim(self) -> int:
        return self.spec.embedding_dim

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        if images.dim() != 4 or images.shape[1] != self.spec.in_channels:
            raise ContractError(
                f"expected images of shape (n, {self.spec.in_channels}, h, w), "
                f"got {tuple(images.shape)}"
            )
        if images.shape[0] == 0:
            return images.new_zeros((0, self.embedding_dim))

        features = self.pool(self.blocks(images)).flatten(1)
        return self.embedding(features)

    def head_parameters(self):
        """Parameters of the embedding layer (trained at the head learning rate)."""
        return list(self.embedding.parameters())

    def body_parameters(self):
        return list(self.blocks.parameters())


class CosineHead(nn.Module):
    """
    Cosine classifier: N x d weight matrix of class directions plus a logit scale.

    The forward pass normalizes both the weights and the embedding, so logits
    lie in scale * [-1, 1]. renormalize_() projects the stored rows back onto
    the unit sphere after an optimizer step.

    Args:
        weights: Initial (N, d) weights; rows are normalized on construction
        scale: Positive logit multiplier
        learn_scale: Whether the scale is a trainable parameter
    """

    def __init__(self, weights: torch.Tensor, scale: float = 10.0, learn_scale: bool = True):
        super().__init__()
        if weights.dim() != 2:
            raise ContractError(f"weights must be (N, d), got {tuple(weights.shape)}")
        if scale <= 0:
            raise ContractError(f"scale must be positive, got {scale}")

        self.weight = nn.Parameter(normalize(weights.detach().clone()))
        # scale = exp(log_scale) stays positive under any gradient step
        log_scale = torch.tensor(float(np.log(scale)), dtype=weights.dtype)
        if learn_scale:
            self.log_scale = nn.Parameter(log_scale)
        else:
            self.register_buffer("log_scale", log_scale)

    @classmethod
    def random(
        cls,
        way: int,
        dim: int,
        scale: float = 10.0,
        generator: Optional[torch.Generator] = None,
        learn_scale: bool = True
    ) -> "CosineHead":
        """Random unit-norm directions (the MixMatch-without-imprinting ablation)."""
        weights = torch.randn(way, dim, generator=generator)
        return cls(weights, scale=scale, learn_scale=learn_scale)

    @property
    def way(self) -> int:
        return self.weight.shape[0]

    @property
    def dim(self) -> int:
        return self.weight.shape[1]

    @property
    def scale(self) -> torch.Tensor:
        return self.log_scale.exp()

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        return cosine_scores(self, embeddings)

    @torch.no_grad()
    def renormalize_(self) -> None:
        self.weight.copy_(F.normalize(self.weight, dim=1))


class LinearHead(nn.Module):
    """Plain linear classifier used for base-class pre-training."""

    def __init__(self, dim: int, num_classes: int):
        super().__init__()
        self.fc = nn.Linear(dim, num_classes)

    def forward(self, embeddings: torch.Tensor) -> torch.Tensor:
        return self.fc(embeddings)


class FewShotClassifier(nn.Module):
    """
    Extractor plus classifier head: images -> logits.

    Attributes:
        extractor: FeatureExtractor f^e
        head: CosineHead (novel classes) or LinearHead (pre-training)
    """

    def __init__(self, extractor: FeatureExtractor, head: nn.Module):
        super().__init__()
        self.extractor = extractor
        self.head = head

    @property
    def way(self) -> int:
        if isinstance(self.head, CosineHead):
            return self.head.way
        return self.head.fc.out_features

    def forward(self, images: torch.Tensor) -> torch.Tensor:
        return self.head(self.extractor(images))

    @torch.no_grad()
    def predict_proba(self, images: Union[np.ndarray, torch.Tensor]) -> torch.Tensor:
        """Class probabilities in inference mode (batch norm uses running stats)."""
        was_training = self.training
        self.eval()
        try:
            logits = self(as_tensor(images, self))
        finally:
            self.train(was_training)
        return logits.softmax(dim=1)


def normalize(v: torch.Tensor, eps: float = NORM_EPS) -> torch.Tensor:
    """
    Scale v (or each row of a 2-D batch) to unit L2 norm.

    Raises:
        DegenerateVectorError: If any vector has norm <= eps

    Example:
        >>> normalize(torch.tensor([3.0, 4.0]))
        tensor([0.6000, 0.8000])
    """
    norms = v.norm(dim=-1, keepdim=True)
    if v.numel() and bool((norms <= eps).any()):
        raise DegenerateVectorError(
            f"cannot normalize a vector with norm {norms.min().item():.3e} (eps={eps})"
        )
    return v / norms


def embed(extractor: FeatureExtractor, images: Union[np.ndarray, torch.Tensor]) -> torch.Tensor:
    """
    Embeddings of an image batch in inference mode, without normalization.

    Returns:
        (n, d) tensor; empty batch gives a (0, d) tensor
    """
    was_training = extractor.training
    extractor.eval()
    try:
        with torch.no_grad():
            return extractor(as_tensor(images, extractor))
    finally:
        extractor.train(was_training)


def cosine_scores(head: CosineHead, x: torch.Tensor) -> torch.Tensor:
    """
    scale * cos(w_c, x) for every class c.

    Accepts a single (d,) embedding or an (n, d) batch.

    Raises:
        ContractError: If the embedding dimension differs from the head's
        DegenerateVectorError: If x is (numerically) zero
    """
    if x.shape[-1] != head.dim:
        raise ContractError(f"embedding dim {x.shape[-1]} != head dim {head.dim}")

    weights = F.normalize(head.weight, dim=1)
    return head.scale * (normalize(x) @ weights.t())


def predict(
    head: CosineHead,
    extractor: FeatureExtractor,
    image: Union[np.ndarray, torch.Tensor]
) -> torch.Tensor:
    """
    ProbVector for one image (or a batch): softmax over cosine scores.

    torch.argmax returns the first maximal index, so ties go to the lowest class.
    """
    single = image.ndim == 3
    batch = image[None] if single else image
    with torch.no_grad():
        probs = cosine_scores(head, embed(extractor, batch)).softmax(dim=-1)
    return probs[0] if single else probs


def as_tensor(images: Union[np.ndarray, torch.Tensor], module: nn.Module) -> torch.Tensor:
    """Convert an image array to a tensor with the module's dtype."""
    dtype = next(module.parameters()).dtype
    if isinstance(images, torch.Tensor):
        return images.to(dtype)
    return torch.as_tensor(np.asarray(images), dtype=dtype)
