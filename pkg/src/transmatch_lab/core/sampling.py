"""
Class splitting and episode sampling.

Pure functions: every result is a deterministic function of its inputs and
seed. Each call owns an independent numpy Generator, so episodes can be
sampled from several workers at once.

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import logging
from typing import Iterable, List, Sequence

import numpy as np

from transmatch_lab.core.errors import ConfigurationError, SamplingError
from transmatch_lab.models.episode import ClassSplit, Episode, ImageDataset

logger = logging.getLogger(__name__)


def make_split(num_classes: int, counts: Sequence[int], seed: int) -> ClassSplit:
    """
    Partition class ids 0..num_classes-1 into base / validation / novel sets.

    Args:
        num_classes: Number of classes in the dataset
        counts: (n_base, n_validation, n_novel), must sum to num_classes
        seed: Shuffle seed

    Returns:
        ClassSplit covering every class exactly once

    Raises:
        ConfigurationError: If counts are negative or do not sum to num_classes

    Example:
        >>> split = make_split(100, (64, 16, 20), seed=0)
        >>> len(split.base_classes), len(split.novel_classes)
        (64, 20)
    """
    counts = tuple(int(c) for c in counts)
    if len(counts) != 3:
        raise ConfigurationError(f"counts must have three entries, got {counts}")

    if any(c < 0 for c in counts):
        raise ConfigurationError(f"counts must be >= 0, got {counts}")

    if sum(counts) != num_classes:
        raise ConfigurationError(
            f"split counts {counts} sum to {sum(counts)}, expected num_classes={num_classes}"
        )

    order = np.random.default_rng(seed).permutation(num_classes)
    n_base, n_val, _ = counts

    return ClassSplit(
        base_classes=frozenset(int(c) for c in order[:n_base]),
        validation_classes=frozenset(int(c) for c in order[n_base:n_base + n_val]),
        novel_classes=frozenset(int(c) for c in order[n_base + n_val:]),
    )


def sample_episode(
    dataset: ImageDataset,
    novel_classes: Iterable[int],
    way: int,
    shot: int,
    queries: int,
    unlabeled: int,
    num_distractor_classes: int = 0,
    seed: int = 0,
    distractor_mode: str = "replace"
) -> Episode:
    """
    Sample one N-way K-shot episode with an unlabeled pool.

    Each episode class is shuffled once and sliced into support (K), query (Q)
    and unlabeled (U) examples, so no example plays two roles. Because the
    unlabeled slice comes last, changing U with a fixed seed leaves support and
    query unchanged. Distractors come from their own stream, so changing D
    keeps the episode classes, support and query too; the distractor classes
    for D are a prefix of those for D + 1.

    Distractor classes are drawn from novel_classes outside the episode's N
    classes. In "add" mode each contributes U images; in "replace" mode every
    one of the N + D classes contributes floor(U * N / (N + D)) images, so the
    total unlabeled budget stays at about N * U.

    Args:
        dataset: Source dataset (global labels)
        novel_classes: Class ids eligible for episodes
        way, shot, queries, unlabeled: N, K, Q, U
        num_distractor_classes: D
        seed: Episode seed
        distractor_mode: "replace" or "add"

    Returns:
        Episode with labels re-indexed to 0..N-1

    Raises:
        ConfigurationError: If N + D exceeds the available classes
        SamplingError: If a chosen class has too few examples (names the class)
    """
    pool = sorted(int(c) for c in novel_classes)
    if way < 1 or shot < 1 or queries < 0 or unlabeled < 0 or num_distractor_classes < 0:
        raise ConfigurationError(
            f"invalid episode shape N={way} K={shot} Q={queries} U={unlabeled} "
            f"D={num_distractor_classes}"
        )

    if way + num_distractor_classes > len(pool):
        raise ConfigurationError(
            f"N={way} plus {num_distractor_classes} distractor classes exceeds "
            f"the {len(pool)} available novel classes"
        )

    if distractor_mode not in ("replace", "add"):
        raise ConfigurationError(f"unknown distractor_mode '{distractor_mode}'")

    # episode classes and distractors use separate streams so D never moves the N classes
    rng, distractor_rng = (np.random.default_rng(s)
                           for s in np.random.SeedSequence(int(seed)).spawn(2))
    episode_classes = [int(c) for c in rng.choice(pool, size=way, replace=False)]
    remaining = [c for c in pool if c not in episode_classes]
    distractor_classes = [int(c) for c in
                          distractor_rng.permutation(remaining)[:num_distractor_classes]]

    per_class_unlabeled = _unlabeled_per_class(
        unlabeled, way, num_distractor_classes, distractor_mode
    )

    support, query, unlabeled_idx = [], [], []
    for class_id in episode_classes:
        indices = _shuffled_class_indices(dataset, class_id, shot + queries + per_class_unlabeled,
                                          rng)
        support.append(indices[:shot])
        query.append(indices[shot:shot + queries])
        unlabeled_idx.append(indices[shot + queries:shot + queries + per_class_unlabeled])

    distractor_idx = []
    for class_id in distractor_classes:
        indices = _shuffled_class_indices(dataset, class_id, per_class_unlabeled,
                                          distractor_rng)
        distractor_idx.append(indices[:per_class_unlabeled])

    support_idx = np.concatenate(support)
    query_idx = np.concatenate(query)
    unlabeled_flat = _concat(unlabeled_idx)
    distractor_flat = _concat(distractor_idx)

    episode = Episode(
        support_images=dataset.images[support_idx],
        support_labels=np.repeat(np.arange(way), shot),
        query_images=dataset.images[query_idx],
        query_labels=np.repeat(np.arange(way), queries),
        unlabeled_images=dataset.images[unlabeled_flat],
        distractor_images=dataset.images[distractor_flat],
        episode_classes=episode_classes,
        distractor_classes=distractor_classes,
        way=way,
        shot=shot,
        queries=queries,
        unlabeled_per_class=per_class_unlabeled,
        episode_seed=int(seed),
        support_indices=support_idx,
        query_indices=query_idx,
        unlabeled_indices=unlabeled_flat,
        distractor_indices=distractor_flat,
    )
    logger.debug(f"Sampled {episode}")
    return episode


def episode_seeds(base_seed: int, count: int, stream: int = 0) -> List[int]:
    """
    Derive `count` episode seeds from a base seed.

    Different `stream` values give independent sequences (used for the
    unpaired protocol, one stream per method).
    """
    if count <= 0:
        return []
    state = np.random.SeedSequence([int(base_seed), int(stream)]).generate_state(count)
    return [int(s) for s in state]


def _unlabeled_per_class(unlabeled: int, way: int, distractors: int, mode: str) -> int:
    if distractors == 0 or mode == "add":
        return unlabeled
    return (unlabeled * way) // (way + distractors)


def _shuffled_class_indices(
    dataset: ImageDataset,
    class_id: int,
    needed: int,
    rng: np.random.Generator
) -> np.ndarray:
    indices = dataset.indices_of(class_id)
    if len(indices) < needed:
        name = dataset.class_names[class_id]
        raise SamplingError(
            f"Class {class_id} ('{name}') has {len(indices)} examples, "
            f"episode needs {needed}",
            class_id=class_id
        )
    return rng.permutation(indices)


def _concat(parts: List[np.ndarray]) -> np.ndarray:
    if not parts:
        return np.empty(0, dtype=np.int64)
    return np.concatenate(parts).astype(np.int64)

