"""
MixMatch building blocks.

Label guessing over M augmentations, sharpening, shuffle-concat-split MixUp
and the two loss terms l1 (soft cross-entropy on mixed labeled examples) and
l2 (squared error on mixed unlabeled examples).

Images travel as numpy arrays until they enter a batch; targets are tensors
of ProbVectors (rows sum to 1).

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple, Union

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from transmatch_lab.core.augmentation import augment_batch
from transmatch_lab.core.errors import ConfigurationError, ContractError
from transmatch_lab.core.networks import as_tensor
from transmatch_lab.models.episode import AugmentationPolicy

logger = logging.getLogger(__name__)

LOG_CLAMP = 1e-12

ImageLike = Union[np.ndarray, torch.Tensor]


@dataclass
class MixedExample:
    """
    A batch of MixUp outputs.

    Attributes:
        image: (n, C, H, W) convex combinations of two source images
        target: (n, N) convex combinations of two ProbVectors
    """
    image: torch.Tensor
    target: torch.Tensor

    def __len__(self) -> int:
        return self.image.shape[0]


@dataclass
class MixMatchBatch:
    """
    Output of build_mixmatch_batch.

    Attributes:
        x1: Mixed labeled examples, |x1| = |L|
        x2: Mixed unlabeled examples, |x2| = |U|
        partners: partners[i] is the index into Concat(L, U) mixed into row i
        lambdas: The raw Beta draws, one per row of Concat(x1, x2)
    """
    x1: MixedExample
    x2: MixedExample
    partners: np.ndarray
    lambdas: np.ndarray


@dataclass
class GuessedLabels:
    """Sharpened label guesses plus the M augmented copies they were averaged over."""
    targets: torch.Tensor
    copies: List[np.ndarray]


def sharpen(p: torch.Tensor, T: float) -> torch.Tensor:
    """
    p_j^(1/T) / sum_k p_k^(1/T), row-wise.

    Raises:
        ConfigurationError: If T <= 0

    Example:
        >>> sharpen(torch.tensor([0.8, 0.2]), 0.5)
        tensor([0.9412, 0.0588])
    """
    if T <= 0:
        raise ConfigurationError(f"sharpening temperature must be > 0, got {T}")
    powered = p.pow(1.0 / T)
    return powered / powered.sum(dim=-1, keepdim=True)


@torch.no_grad()
def guess_label(
    model: nn.Module,
    x_unlabeled: np.ndarray,
    M: int,
    T: float,
    policy: Optional[AugmentationPolicy],
    rng: np.random.Generator
) -> GuessedLabels:
    """
    Average the model's predictions over M augmented copies, then sharpen.

    The model is run in inference mode under no_grad, so the guess never
    joins the training graph.

    Args:
        model: Network producing logits (normally the EMA snapshot)
        x_unlabeled: (n, C, H, W) unlabeled images
        M: Number of augmented copies
        T: Sharpening temperature
        policy: Augmentation policy (None or identity: copies equal the input)
        rng: Source of augmentation draws

    Returns:
        GuessedLabels with (n, N) targets and the M augmented copies
    """
    if M < 1:
        raise ConfigurationError(f"M must be >= 1, got {M}")

    copies = []
    for _ in range(M):
        if policy is None:
            copies.append(np.array(x_unlabeled, copy=True))
        else:
            copies.append(augment_batch(np.asarray(x_unlabeled), policy, rng))

    was_training = model.training
    model.eval()
    try:
        mean = torch.stack([model(as_tensor(c, model)).softmax(dim=1) for c in copies]).mean(dim=0)
    finally:
        model.train(was_training)

    return GuessedLabels(targets=sharpen(mean, T), copies=copies)


def mixup(
    a: Tuple[torch.Tensor, torch.Tensor],
    b: Tuple[torch.Tensor, torch.Tensor],
    lambda_draw: Union[float, torch.Tensor, np.ndarray]
) -> MixedExample:
    """
    lambda' * a + (1 - lambda') * b for both image and target, lambda' = max(l, 1 - l).

    Works on a single (image, target) pair or on batches; an array of draws
    applies one coefficient per row.

    Raises:
        ContractError: If shapes differ or a draw is outside [0, 1]

    Example:
        >>> mixup((torch.tensor(2.0), torch.tensor([1., 0.])),
        ...       (torch.tensor(4.0), torch.tensor([0., 1.])), 0.5).image
        tensor(3.)
    """
    (a_img, a_tgt), (b_img, b_tgt) = a, b
    if a_img.shape != b_img.shape or a_tgt.shape != b_tgt.shape:
        raise ContractError(
            f"mixup shape mismatch: images {tuple(a_img.shape)} vs {tuple(b_img.shape)}, "
            f"targets {tuple(a_tgt.shape)} vs {tuple(b_tgt.shape)}"
        )

    lam = torch.as_tensor(np.asarray(lambda_draw, dtype=np.float64))
    if bool(((lam < 0) | (lam > 1)).any()):
        raise ContractError(f"lambda draws must lie in [0, 1], got {lambda_draw}")
    lam = torch.maximum(lam, 1.0 - lam)

    def combine(x: torch.Tensor, y: torch.Tensor) -> torch.Tensor:
        coeff = lam.to(x.dtype)
        if coeff.dim() == 1:
            coeff = coeff.view(-1, *([1] * (x.dim() - 1)))
        return coeff * x + (1.0 - coeff) * y

    return MixedExample(image=combine(a_img, b_img), target=combine(a_tgt, b_tgt))


def build_mixmatch_batch(
    labeled_images: ImageLike,
    labeled_targets: torch.Tensor,
    unlabeled_images: ImageLike,
    unlabeled_targets: torch.Tensor,
    rng: np.random.Generator,
    alpha: float = 0.75,
    policy: Optional[AugmentationPolicy] = None
) -> MixMatchBatch:
    """
    W = Shuffle(Concat(L, U)); X1'_i = MixUp(L_i, W_i); X2'_i = MixUp(U_i, W_{|L|+i}).

    Labeled images are augmented once before entering the batch when a policy
    is given. Each row gets an independent lambda ~ Beta(alpha, alpha).

    Args:
        labeled_images: (|L|, C, H, W)
        labeled_targets: (|L|, N) one-hot targets
        unlabeled_images: (|U|, C, H, W), may be empty
        unlabeled_targets: (|U|, N) guessed targets
        rng: Drives the augmentation, the shuffle and the Beta draws
        alpha: Beta distribution parameter
        policy: Augmentation for the labeled images

    Raises:
        ConfigurationError: If L is empty or alpha <= 0
        ContractError: If image and target counts differ
    """
    n_labeled, n_unlabeled = len(labeled_targets), len(unlabeled_targets)
    if n_labeled == 0:
        raise ConfigurationError("MixMatch needs a non-empty labeled batch")
    if alpha <= 0:
        raise ConfigurationError(f"alpha must be > 0, got {alpha}")
    if len(labeled_images) != n_labeled or len(unlabeled_images) != n_unlabeled:
        raise ContractError("image and target counts differ in the MixMatch batch")

    if policy is not None:
        if isinstance(labeled_images, torch.Tensor):
            labeled_images = labeled_images.detach().cpu().numpy()
        labeled_images = augment_batch(np.asarray(labeled_images), policy, rng)

    dtype = labeled_targets.dtype
    images = torch.cat([_to_tensor(labeled_images, dtype), _to_tensor(unlabeled_images, dtype)])
    targets = torch.cat([labeled_targets, unlabeled_targets.to(dtype)])

    partners = rng.permutation(n_labeled + n_unlabeled)
    lambdas = rng.beta(alpha, alpha, size=n_labeled + n_unlabeled)

    order = torch.as_tensor(partners, dtype=torch.long)
    mixed = mixup((images, targets), (images[order], targets[order]), lambdas)
    return MixMatchBatch(
        x1=MixedExample(mixed.image[:n_labeled], mixed.target[:n_labeled]),
        x2=MixedExample(mixed.image[n_labeled:], mixed.target[n_labeled:]),
        partners=partners,
        lambdas=lambdas,
    )


def soft_cross_entropy(targets: torch.Tensor, probs: torch.Tensor) -> torch.Tensor:
    """-(1/n) sum_i sum_j p_ij log f_ij, with f clamped at 1e-12."""
    if len(targets) == 0:
        raise ConfigurationError("soft cross-entropy of an empty batch is undefined")
    return -(targets * probs.clamp_min(LOG_CLAMP).log()).sum(dim=1).mean()


def squared_error(targets: torch.Tensor, probs: torch.Tensor, num_classes: int) -> torch.Tensor:
    """sum ||p - f||^2 / (N * n); zero for an empty batch."""
    if num_classes < 1:
        raise ConfigurationError(f"N must be >= 1, got {num_classes}")
    if len(targets) == 0:
        return probs.new_zeros(())
    return (targets - probs).pow(2).sum() / (num_classes * len(targets))


def loss_l1(x1: MixedExample, model: nn.Module) -> torch.Tensor:
    """Mean soft-target cross-entropy of the model on the mixed labeled examples."""
    return soft_cross_entropy(x1.target, model(x1.image).softmax(dim=1))


def loss_l2(x2: MixedExample, model: nn.Module, num_classes: int) -> torch.Tensor:
    """Consistency loss on the mixed unlabeled examples, normalized by N * |x2|."""
    if len(x2) == 0:
        return x2.target.new_zeros(())
    return squared_error(x2.target, model(x2.image).softmax(dim=1), num_classes)


def mixmatch_loss(
    batch: MixMatchBatch,
    model: nn.Module,
    num_classes: int,
    weight: float
) -> Tuple[torch.Tensor, torch.Tensor, torch.Tensor]:
    """
    l1 + weight * l2 from a single forward pass over Concat(x1, x2).

    Returns:
        (total, l1, l2)
    """
    n1 = len(batch.x1)
    probs = model(torch.cat([batch.x1.image, batch.x2.image])).softmax(dim=1)
    l1 = soft_cross_entropy(batch.x1.target, probs[:n1])
    l2 = squared_error(batch.x2.target, probs[n1:], num_classes)
    return l1 + weight * l2, l1, l2


def one_hot(labels: np.ndarray, num_classes: int,
            dtype: torch.dtype = torch.float32) -> torch.Tensor:
    return F.one_hot(torch.as_tensor(labels, dtype=torch.long), num_classes).to(dtype)


def _to_tensor(images: ImageLike, dtype: torch.dtype) -> torch.Tensor:
    if isinstance(images, torch.Tensor):
        return images.to(dtype)
    return torch.as_tensor(np.asarray(images), dtype=dtype)
