"""
Dataset source interface (Port in Hexagonal Architecture).

This defines the contract that any image source adapter must implement.
Sampling, pre-training and evaluation depend on this interface, not on
where the pixels come from (synthetic generator, class folders, torchvision).
"""

from abc import ABC, abstractmethod
from typing import Optional

from transmatch_lab.models.episode import ClassSplit, ImageDataset


class DatasetSource(ABC):
    """
    Abstract interface for loading a labeled image dataset.

    Any source (synthetic blobs, directory of class folders, CIFAR-100, a cache
    wrapped around another source) must implement this interface.
    """

    @abstractmethod
    def load(self) -> ImageDataset:
        """
        Load the whole dataset into memory.

        Returns:
            ImageDataset with float32 images in [0, 1] of uniform shape

        Raises:
            DatasetError: If the data cannot be read
        """
        pass

    @property
    @abstractmethod
    def cache_key(self) -> str:
        """
        Stable identifier of the data this source yields.

        Two sources with equal cache keys must load identical datasets.
        """
        pass

    def predefined_split(self) -> Optional[ClassSplit]:
        """
        Class split shipped with the data, if any.

        Sources without one return None and the split is drawn with make_split.
        """
        return None
