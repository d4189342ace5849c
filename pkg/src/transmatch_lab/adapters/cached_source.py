"""
Caching wrapper for DatasetSource.

This is a decorator/wrapper that adds file-based caching to any DatasetSource.
Decoded image arrays are stored as parquet (one row per image: label plus the
raw float32 bytes) next to a small JSON sidecar with the class names and the
image shape, so folder decoding or synthetic generation happens once.
"""

from __future__ import annotations

import json
import logging
import shutil
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from transmatch_lab.core.data_source import DatasetSource
from transmatch_lab.models.episode import ClassSplit, ImageDataset

logger = logging.getLogger(__name__)


class CachedDatasetSource(DatasetSource):
    """
    Decorator that wraps another DatasetSource and adds file-based caching.

    Cache structure:
        cache_dir/
            synthetic_c40_n80_s16_ch3_seed0.parquet
            synthetic_c40_n80_s16_ch3_seed0.json

    Args:
        source: The underlying DatasetSource to wrap
        cache_dir: Directory to store cached arrays (default: ./data/cache)

    Example:
        >>> cached = CachedDatasetSource(ClassFolderSource(spec), cache_dir="./data/cache")
        >>> # First call decodes the images and caches them
        >>> ds = cached.load()
        >>> # Second call reads the parquet file
        >>> ds = cached.load()
    """

    def __init__(self, source: DatasetSource, cache_dir: str = "./data/cache"):
        self.source = source
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)

    @property
    def cache_key(self) -> str:
        return self.source.cache_key

    @property
    def data_file(self) -> Path:
        return self.cache_dir / f"{self.cache_key}.parquet"

    @property
    def meta_file(self) -> Path:
        return self.cache_dir / f"{self.cache_key}.json"

    def load(self) -> ImageDataset:
        """
        Load from cache if present, otherwise from the wrapped source (and cache it).
        """
        if self.data_file.exists() and self.meta_file.exists():
            try:
                dataset = self._read()
                logger.debug(f"Loaded {len(dataset)} images from cache {self.data_file}")
                return dataset
            except Exception as e:
                logger.warning(f"Cache {self.data_file} unreadable ({e}); rebuilding")
                self.data_file.unlink(missing_ok=True)
                self.meta_file.unlink(missing_ok=True)

        dataset = self.source.load()

        if len(dataset):
            try:
                self._write(dataset)
            except Exception as e:
                # Failed to cache, but we still have the data
                logger.warning(f"Could not write cache {self.data_file}: {e}")

        return dataset

    def predefined_split(self) -> Optional[ClassSplit]:
        return self.source.predefined_split()

    def _write(self, dataset: ImageDataset) -> None:
        images = np.ascontiguousarray(dataset.images, dtype=np.float32)
        df = pd.DataFrame({
            "label": dataset.labels,
            "pixels": [img.tobytes() for img in images],
        })
        df.to_parquet(self.data_file)
        self.meta_file.write_text(json.dumps({
            "class_names": dataset.class_names,
            "image_shape": list(dataset.image_shape),
        }))

    def _read(self) -> ImageDataset:
        meta = json.loads(self.meta_file.read_text())
        shape = tuple(meta["image_shape"])
        df = pd.read_parquet(self.data_file)
        images = np.stack([np.frombuffer(b, dtype=np.float32).reshape(shape)
                           for b in df["pixels"]]) if len(df) else \
            np.empty((0,) + shape, dtype=np.float32)
        return ImageDataset(
            images=images,
            labels=df["label"].to_numpy(dtype=np.int64),
            class_names=list(meta["class_names"]),
        )

    def clear_cache(self):
        """
        Clear all cached data.

        Useful for testing or when you want to force a fresh load.
        """
        if self.cache_dir.exists():
            shutil.rmtree(self.cache_dir)
            self.cache_dir.mkdir(parents=True, exist_ok=True)
