"""
Unit tests for pad-crop-flip augmentation.
"""

import numpy as np

from transmatch_lab.core.augmentation import augment, augment_batch
from transmatch_lab.models.episode import AugmentationPolicy


def make_image(seed: int = 0) -> np.ndarray:
    return np.random.default_rng(seed).random((3, 8, 8)).astype(np.float32)


class TestAugment:
    """Single-image draws."""

    def test_identity_policy_returns_copy(self):
        """The identity policy leaves pixels untouched."""
        img = make_image()

        out = augment(img, AugmentationPolicy.identity(), draw_seed=3)

        np.testing.assert_array_equal(out, img)
        assert out is not img

    def test_shape_dtype_and_range_preserved(self):
        """Crops are cut back to the input size; values stay in [0, 1]."""
        img = make_image()
        policy = AugmentationPolicy(pad_crop_pixels=2, horizontal_flip_probability=0.5)

        for seed in range(20):
            out = augment(img, policy, draw_seed=seed)
            assert out.shape == img.shape
            assert out.dtype == img.dtype
            assert out.min() >= 0.0 and out.max() <= 1.0

    def test_same_seed_same_draw(self):
        """A draw is a pure function of the seed."""
        img = make_image()
        policy = AugmentationPolicy()

        np.testing.assert_array_equal(augment(img, policy, 42), augment(img, policy, 42))

    def test_flip_only(self):
        """With no padding and p=1 the image is mirrored left-right."""
        img = make_image()
        policy = AugmentationPolicy(pad_crop_pixels=0, horizontal_flip_probability=1.0)

        np.testing.assert_array_equal(augment(img, policy, 0), img[:, :, ::-1])

    def test_padding_larger_than_image(self):
        """Reflect padding is capped for tiny images."""
        img = np.random.default_rng(0).random((1, 2, 2)).astype(np.float32)

        out = augment(img, AugmentationPolicy(pad_crop_pixels=5), draw_seed=1)

        assert out.shape == (1, 2, 2)


class TestAugmentBatch:
    """Batch draws."""

    def test_batch_determined_by_rng_state(self):
        """Two generators in the same state give the same batch."""
        images = np.stack([make_image(i) for i in range(4)])
        policy = AugmentationPolicy()

        a = augment_batch(images, policy, np.random.default_rng(9))
        b = augment_batch(images, policy, np.random.default_rng(9))

        np.testing.assert_array_equal(a, b)
        assert a.shape == images.shape

    def test_empty_batch(self):
        """An empty batch stays empty."""
        empty = np.zeros((0, 3, 8, 8), np.float32)

        out = augment_batch(empty, AugmentationPolicy(), np.random.default_rng(0))

        assert out.shape == (0, 3, 8, 8)
