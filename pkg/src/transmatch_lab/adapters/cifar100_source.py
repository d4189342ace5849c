"""
CIFAR-100 through torchvision.

The training split (500 images per class) is the whole dataset; classes are
then split base / validation / novel with make_split (64 / 16 / 20 by the
usual few-shot convention). Images are 32x32 RGB; a smaller image_size is
reached by average pooling.
"""

from __future__ import annotations

import logging

import numpy as np
import torch
import torch.nn.functional as F

from transmatch_lab.core.data_source import DatasetSource
from transmatch_lab.core.errors import DatasetError
from transmatch_lab.models.config import DatasetSpec
from transmatch_lab.models.episode import ImageDataset

logger = logging.getLogger(__name__)


class Cifar100Source(DatasetSource):
    """torchvision.datasets.CIFAR100 (train split) as an ImageDataset."""

    def __init__(self, spec: DatasetSpec):
        if spec.kind != "cifar100":
            raise DatasetError(f"Cifar100Source needs kind 'cifar100', got '{spec.kind}'")
        if spec.channels != 3:
            raise DatasetError("CIFAR-100 images have 3 channels")
        self.spec = spec

    @property
    def cache_key(self) -> str:
        return f"cifar100_s{self.spec.image_size}"

    def load(self) -> ImageDataset:
        from torchvision.datasets import CIFAR100

        root = self.spec.path or "./data/cifar100"
        try:
            data = CIFAR100(root, train=True, download=self.spec.download)
        except RuntimeError as e:
            raise DatasetError(f"CIFAR-100 not available under {root} "
                               f"(set dataset.download=true to fetch it): {e}") from e

        images = torch.as_tensor(data.data).permute(0, 3, 1, 2).float() / 255.0
        if self.spec.image_size != images.shape[-1]:
            images = F.adaptive_avg_pool2d(images, self.spec.image_size)

        logger.info(f"Loaded CIFAR-100: {len(images)} images, {len(data.classes)} classes")
        return ImageDataset(
            images=images.numpy().astype(np.float32),
            labels=np.asarray(data.targets, dtype=np.int64),
            class_names=list(data.classes),
        )
