"""
Stochastic image augmentation.

Reflect-pad then random crop back to the original size, then a horizontal
flip with the policy's probability. Shape and value range are preserved.
Every draw is a pure function of (image, policy, draw_seed).
"""

from __future__ import annotations

import numpy as np

from transmatch_lab.models.episode import AugmentationPolicy


def augment(image: np.ndarray, policy: AugmentationPolicy, draw_seed: int) -> np.ndarray:
    """
    Apply one random augmentation draw to a (channels, height, width) image.

    Args:
        image: Float array in [0, 1]
        policy: Pad/crop size and flip probability
        draw_seed: Seed for this draw; same seed gives the same output

    Returns:
        New array with the same shape and dtype

    Example:
        >>> out = augment(img, AugmentationPolicy.identity(), draw_seed=3)
        >>> np.array_equal(out, img)
        True
    """
    if policy.is_identity:
        return image.copy()

    rng = np.random.default_rng(draw_seed)
    out = image
    pad = policy.pad_crop_pixels

    if pad > 0:
        _, height, width = image.shape
        # reflect padding needs pad < side length
        pad = min(pad, height - 1, width - 1)
        padded = np.pad(image, ((0, 0), (pad, pad), (pad, pad)), mode="reflect")
        top = int(rng.integers(0, 2 * pad + 1))
        left = int(rng.integers(0, 2 * pad + 1))
        out = padded[:, top:top + height, left:left + width]

    if rng.random() < policy.horizontal_flip_probability:
        out = out[:, :, ::-1]

    return np.ascontiguousarray(out, dtype=image.dtype)


def augment_batch(
    images: np.ndarray,
    policy: AugmentationPolicy,
    rng: np.random.Generator
) -> np.ndarray:
    """
    Augment every image of an (n, channels, height, width) batch independently.

    One draw seed per image is taken from rng, so the batch result is
    determined by rng's state.
    """
    if len(images) == 0 or policy.is_identity:
        return images.copy()

    seeds = rng.integers(0, 2**31 - 1, size=len(images))
    return np.stack([augment(img, policy, int(s)) for img, s in zip(images, seeds)])
