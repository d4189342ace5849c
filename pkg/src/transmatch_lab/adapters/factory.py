"""Pick the DatasetSource for a DatasetSpec, wrapped in the parquet cache when configured."""

from __future__ import annotations

from transmatch_lab.adapters.cached_source import CachedDatasetSource
from transmatch_lab.adapters.cifar100_source import Cifar100Source
from transmatch_lab.adapters.folder_source import ClassFolderSource
from transmatch_lab.adapters.synthetic_source import SyntheticBlobSource
from transmatch_lab.core.data_source import DatasetSource
from transmatch_lab.core.errors import ConfigurationError
from transmatch_lab.models.config import DatasetSpec

SOURCES = {
    "synthetic": SyntheticBlobSource,
    "folder": ClassFolderSource,
    "cifar100": Cifar100Source,
}


def make_source(spec: DatasetSpec) -> DatasetSource:
    if spec.kind not in SOURCES:
        raise ConfigurationError(
            f"Unknown dataset kind '{spec.kind}'. Available: {', '.join(sorted(SOURCES))}"
        )
    source = SOURCES[spec.kind](spec)
    if spec.cache_dir:
        source = CachedDatasetSource(source, cache_dir=spec.cache_dir)
    return source
