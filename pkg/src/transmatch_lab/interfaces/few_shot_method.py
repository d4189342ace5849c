"""
Few-shot method interface.

A method turns a pre-trained extractor plus one episode into an N-way
classifier for that episode. The benchmark engine only talks to methods
through this contract, so new methods plug in by registering a class.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Protocol, Union, runtime_checkable

import numpy as np
import torch

from transmatch_lab.models.episode import Episode


@runtime_checkable
class EpisodeModel(Protocol):
    """
    Anything that maps an image batch to N class probabilities.

    FewShotClassifier satisfies this protocol.
    """

    @property
    def way(self) -> int:
        """Number of classes N."""
        ...

    def predict_proba(self, images: Union[np.ndarray, torch.Tensor]) -> torch.Tensor:
        """(n, N) ProbVectors in inference mode."""
        ...


@dataclass
class Adaptation:
    """
    Output of FewShotMethod.adapt.

    Attributes:
        model: Classifier for the episode's N classes
        loss_trace: Per-epoch training losses (empty for training-free methods)
    """
    model: EpisodeModel
    loss_trace: List[float] = field(default_factory=list)

    @property
    def final_loss(self) -> Optional[float]:
        return self.loss_trace[-1] if self.loss_trace else None


@runtime_checkable
class FewShotMethod(Protocol):
    """
    Interface for few-shot adaptation methods.

    Example:
        >>> method: FewShotMethod = get_method('transmatch', extractor, config)
        >>> adaptation = method.adapt(episode)
        >>> probs = adaptation.model.predict_proba(episode.query_images)
    """

    def adapt(self, episode: Episode) -> Adaptation:
        """
        Build an N-way classifier from the episode's support (and unlabeled) images.

        Must not modify the shared extractor.
        """
        ...

    @property
    def method_name(self) -> str:
        """Registered name of this method."""
        ...
