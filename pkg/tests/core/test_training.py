"""
Unit tests for the shared training helpers.
"""

import pytest
import torch

from transmatch_lab.core.errors import DivergenceError
from transmatch_lab.core.networks import FeatureExtractor
from transmatch_lab.core.training import (
    EpochLoss,
    check_finite,
    has_batch_norm,
    set_batch_norm_eval,
)
from transmatch_lab.models.config import BackboneSpec


def extractor(batch_norm: bool) -> FeatureExtractor:
    torch.manual_seed(0)
    return FeatureExtractor(BackboneSpec(in_channels=1, widths=(4,), embedding_dim=4,
                                         batch_norm=batch_norm))


class TestBatchNormHelpers:
    """Detecting and freezing batch-norm layers."""

    def test_has_batch_norm(self):
        """True only when the backbone carries batch-norm layers."""
        assert has_batch_norm(extractor(batch_norm=True))
        assert not has_batch_norm(extractor(batch_norm=False))

    def test_set_batch_norm_eval_keeps_statistics(self):
        """A training-mode forward pass after set_batch_norm_eval leaves running stats alone."""
        # Arrange
        model = extractor(batch_norm=True).train()
        set_batch_norm_eval(model)
        before = {k: v.clone() for k, v in model.state_dict().items()}

        # Act
        model(torch.randn(4, 1, 8, 8))

        # Assert
        after = model.state_dict()
        assert all(torch.equal(before[k], after[k]) for k in before)


class TestCheckFinite:
    """Divergence detection."""

    def test_finite_loss_passes(self):
        """A finite loss returns quietly."""
        model = extractor(batch_norm=False)
        optimizer = torch.optim.SGD(model.parameters(), lr=0.1)

        check_finite(torch.tensor(1.5), "pretrain", 0, 0, optimizer, [])

    def test_nan_loss_raises_with_trace(self):
        """NaN raises DivergenceError carrying the loss trace so far."""
        model = extractor(batch_norm=False)
        optimizer = torch.optim.SGD(model.parameters(), lr=0.1)
        trace = [EpochLoss(epoch=0, loss=2.0)]

        with pytest.raises(DivergenceError) as info:
            check_finite(torch.tensor(float("nan")), "pretrain", 1, 3, optimizer, trace)

        assert info.value.loss_trace == [2.0]
