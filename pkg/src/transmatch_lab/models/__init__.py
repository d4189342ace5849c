"""
Data models for the few-shot pipeline.

These are pure data classes that represent the core domain objects:
datasets, splits, episodes, configuration and results.
"""

from .episode import (
    AugmentationPolicy,
    ClassSplit,
    Episode,
    ImageDataset,
)
from .results import AggregateResult, EpisodeSetting, ResultRecord

__all__ = [
    'AugmentationPolicy', 'ClassSplit', 'Episode', 'ImageDataset',
    'AggregateResult', 'EpisodeSetting', 'ResultRecord',
]
