"""
Episode data models.

These are plain data classes describing datasets, class splits and the
N-way K-shot episodes sampled from them. Images are float32 numpy arrays of
shape (channels, height, width) with values in [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import FrozenSet, List

import numpy as np

from transmatch_lab.core.errors import ConfigurationError, ContractError


@dataclass
class ImageDataset:
    """
    An in-memory labeled image collection.

    Attributes:
        images: Array of shape (n, channels, height, width), float32 in [0, 1]
        labels: Integer array of shape (n,), each a valid index into class_names
        class_names: Human-readable class names, index = class id

    Example:
        >>> ds = ImageDataset(images=np.zeros((4, 3, 8, 8), np.float32),
        ...                   labels=np.array([0, 0, 1, 1]),
        ...                   class_names=["a", "b"])
        >>> ds.num_classes
        2
    """
    images: np.ndarray
    labels: np.ndarray
    class_names: List[str]

    def __post_init__(self):
        """Validate shapes and label range."""
        self.labels = np.asarray(self.labels, dtype=np.int64)

        if self.images.ndim != 4:
            raise ContractError(
                f"images must have shape (n, channels, height, width), got {self.images.shape}"
            )

        if len(self.images) != len(self.labels):
            raise ContractError(
                f"{len(self.images)} images but {len(self.labels)} labels"
            )

        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise ContractError(
                f"labels must lie in [0, {self.num_classes}), "
                f"got range [{self.labels.min()}, {self.labels.max()}]"
            )

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    @property
    def image_shape(self) -> tuple:
        return tuple(self.images.shape[1:])

    def __len__(self) -> int:
        return len(self.labels)

    def indices_of(self, class_id: int) -> np.ndarray:
        """Dataset indices of every example of one class, ascending."""
        return np.flatnonzero(self.labels == class_id)

    def subset(self, class_ids) -> "ImageDataset":
        """
        Keep only the examples of the given classes, relabeled 0..len(class_ids)-1.

        The order of class_ids defines the new label order.
        """
        class_ids = list(class_ids)
        remap = {c: i for i, c in enumerate(class_ids)}
        mask = np.isin(self.labels, class_ids)
        new_labels = np.array([remap[c] for c in self.labels[mask]], dtype=np.int64)
        return ImageDataset(
            images=self.images[mask],
            labels=new_labels,
            class_names=[self.class_names[c] for c in class_ids]
        )


@dataclass(frozen=True)
class ClassSplit:
    """
    Partition of a dataset's classes into base / validation / novel sets.

    The three sets are pairwise disjoint; make_split() guarantees that their
    union covers every class.
    """
    base_classes: FrozenSet[int]
    validation_classes: FrozenSet[int]
    novel_classes: FrozenSet[int]

    def __post_init__(self):
        """Validate disjointness."""
        if (self.base_classes & self.validation_classes
                or self.base_classes & self.novel_classes
                or self.validation_classes & self.novel_classes):
            raise ConfigurationError("base, validation and novel class sets must be disjoint")

    @property
    def all_classes(self) -> FrozenSet[int]:
        return self.base_classes | self.validation_classes | self.novel_classes

    def to_dict(self) -> dict:
        return {
            'base_classes': sorted(self.base_classes),
            'validation_classes': sorted(self.validation_classes),
            'novel_classes': sorted(self.novel_classes),
        }


@dataclass(frozen=True)
class AugmentationPolicy:
    """
    Stochastic augmentation: reflect-pad then random crop, then horizontal flip.

    Attributes:
        pad_crop_pixels: Reflect padding on every side before cropping back
        horizontal_flip_probability: Chance of mirroring the image left-right
        rng_seed: Base seed for callers that derive per-draw seeds from it
    """
    pad_crop_pixels: int = 2
    horizontal_flip_probability: float = 0.5
    rng_seed: int = 0

    def __post_init__(self):
        if self.pad_crop_pixels < 0:
            raise ConfigurationError(f"pad_crop_pixels must be >= 0, got {self.pad_crop_pixels}")

        if not 0.0 <= self.horizontal_flip_probability <= 1.0:
            raise ConfigurationError(
                f"horizontal_flip_probability must be in [0, 1], "
                f"got {self.horizontal_flip_probability}"
            )

    @classmethod
    def identity(cls) -> "AugmentationPolicy":
        """A policy that leaves every image untouched."""
        return cls(pad_crop_pixels=0, horizontal_flip_probability=0.0)

    @property
    def is_identity(self) -> bool:
        return self.pad_crop_pixels == 0 and self.horizontal_flip_probability == 0.0


@dataclass
class Episode:
    """
    One sampled N-way K-shot trial.

    Labels are episode-local (0..N-1, in the order of episode_classes). Images
    are stored as stacked arrays; the *_indices arrays hold the source dataset
    indices so disjointness of the roles can be audited.

    Attributes:
        support_images / support_labels: N*K labeled examples
        query_images / query_labels: N*Q held-out examples used for scoring
        unlabeled_images: Unlabeled pool drawn from the N episode classes
        distractor_images: Unlabeled images from classes outside the episode
        episode_classes: Dataset class ids, position = episode-local label
        distractor_classes: Dataset class ids the distractor images came from
        way, shot, queries, unlabeled_per_class: N, K, Q, effective U
        episode_seed: Seed the episode was sampled with (replayable)
    """
    support_images: np.ndarray
    support_labels: np.ndarray
    query_images: np.ndarray
    query_labels: np.ndarray
    unlabeled_images: np.ndarray
    distractor_images: np.ndarray
    episode_classes: List[int]
    distractor_classes: List[int]
    way: int
    shot: int
    queries: int
    unlabeled_per_class: int
    episode_seed: int

    # Source dataset indices, for auditing
    support_indices: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    query_indices: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    unlabeled_indices: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))
    distractor_indices: np.ndarray = field(default_factory=lambda: np.empty(0, np.int64))

    def __post_init__(self):
        if len(self.episode_classes) != self.way:
            raise ContractError(
                f"{len(self.episode_classes)} episode classes for a {self.way}-way episode")
        if set(self.episode_classes) & set(self.distractor_classes):
            raise ContractError("distractor classes must lie outside the episode classes")
        _check_role(self.support_images, self.support_labels, self.way, self.shot, "support")
        _check_role(self.query_images, self.query_labels, self.way, self.queries, "query")

        roles = [self.support_indices, self.query_indices, self.unlabeled_indices,
                 self.distractor_indices]
        audited = np.concatenate([np.asarray(r, dtype=np.int64) for r in roles])
        if len(np.unique(audited)) != len(audited):
            raise ContractError("an example appears in more than one episode role")

    @property
    def unlabeled_pool(self) -> np.ndarray:
        """Unlabeled images from episode classes followed by distractor images."""
        if len(self.distractor_images) == 0:
            return self.unlabeled_images
        if len(self.unlabeled_images) == 0:
            return self.distractor_images
        return np.concatenate([self.unlabeled_images, self.distractor_images])

    def __str__(self) -> str:
        return (
            f"Episode(seed={self.episode_seed}): {self.way}-way {self.shot}-shot, "
            f"Q={self.queries}, U={self.unlabeled_per_class}, "
            f"distractors={len(self.distractor_classes)}"
        )


def _check_role(images: np.ndarray, labels: np.ndarray, way: int, per_class: int,
                role: str) -> None:
    """Exactly per_class examples of each local label 0..way-1, grouped by class."""
    expected = np.repeat(np.arange(way), per_class)
    if len(images) != len(expected) or not np.array_equal(np.asarray(labels), expected):
        raise ContractError(
            f"{role} must hold {per_class} example(s) for each of {way} classes "
            f"labeled 0..{way - 1}, got {len(images)} images with labels "
            f"{np.asarray(labels).tolist()}"
        )
