"""
Shared fixtures: a tiny synthetic dataset, its class split, a narrow backbone
and one sampled episode. Everything is small enough for CPU unit tests.
"""

import pytest
import torch

from transmatch_lab.adapters.synthetic_source import SyntheticBlobSource
from transmatch_lab.core.networks import FeatureExtractor
from transmatch_lab.core.sampling import make_split, sample_episode
from transmatch_lab.models.config import tiny_config


@pytest.fixture
def config():
    """Fast RunConfig: 12 classes of 8x8 grayscale blobs, two conv blocks."""
    return tiny_config()


@pytest.fixture(scope="session")
def tiny_dataset():
    """12 classes x 30 images, (1, 8, 8)."""
    return SyntheticBlobSource(tiny_config().dataset).load()


@pytest.fixture
def split(config, tiny_dataset):
    return make_split(tiny_dataset.num_classes, config.split.counts, config.split.seed)


@pytest.fixture
def extractor(config):
    """Randomly initialized (seeded) extractor in inference mode."""
    torch.manual_seed(0)
    return FeatureExtractor(config.backbone).eval()


@pytest.fixture
def episode(tiny_dataset, split):
    """3-way 1-shot episode with 3 queries and 4 unlabeled images per class."""
    return sample_episode(tiny_dataset, split.novel_classes, way=3, shot=1, queries=3,
                          unlabeled=4, seed=7)
