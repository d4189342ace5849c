"""
Unit tests for base-class pre-training.
"""

import numpy as np
import pytest
import torch

from transmatch_lab.core.errors import ConfigurationError, ContractError, DivergenceError
from transmatch_lab.core.networks import FeatureExtractor, LinearHead
from transmatch_lab.core.pretrain import (
    base_training_set,
    batch_indices,
    make_base_head,
    pretrain,
)
from transmatch_lab.core.sampling import make_split
from transmatch_lab.models.config import BackboneSpec, PretrainConfig
from transmatch_lab.models.episode import ImageDataset


def separable_dataset(n_per_class: int = 40, seed: int = 0) -> ImageDataset:
    """Class 0 is bright in the top half, class 1 in the bottom half."""
    rng = np.random.default_rng(seed)
    images = rng.uniform(0.0, 0.2, size=(2 * n_per_class, 1, 8, 8)).astype(np.float32)
    images[:n_per_class, :, :4, :] += 0.7
    images[n_per_class:, :, 4:, :] += 0.7
    labels = np.repeat([0, 1], n_per_class)
    return ImageDataset(images=images, labels=labels, class_names=["top", "bottom"])


def small_extractor(batch_norm: bool = True) -> FeatureExtractor:
    torch.manual_seed(0)
    return FeatureExtractor(BackboneSpec(in_channels=1, widths=(8, 8), embedding_dim=8,
                                         batch_norm=batch_norm))


class TestPretrain:
    """Training loop behavior."""

    def test_separable_blobs_reach_high_accuracy(self):
        """200 steps on linearly separable blobs -> training accuracy >= 0.95."""
        # Arrange: 80 images / batch 16 = 5 steps per epoch, 40 epochs
        data = separable_dataset()
        extractor = small_extractor()
        head = LinearHead(8, 2)
        config = PretrainConfig(epochs=40, batch_size=16, learning_rate=0.05,
                                lr_step_epochs=100, head_lr_multiplier=1.0)

        # Act
        result = pretrain(extractor, head, data, config)

        # Assert
        assert result.final_accuracy >= 0.95
        assert result.final_loss < result.initial_loss
        assert len(result.loss_trace) == 40

    def test_zero_epochs_leaves_parameters(self):
        """epochs=0 returns a checkpoint of the initial state."""
        extractor = small_extractor()
        before = {k: v.clone() for k, v in extractor.state_dict().items()}

        result = pretrain(extractor, LinearHead(8, 2), separable_dataset(),
                          PretrainConfig(epochs=0))

        for name, value in before.items():
            assert torch.equal(result.checkpoint.parameters[f"extractor.{name}"], value)
        assert result.loss_trace == []

    def test_zero_learning_rate_keeps_loss(self):
        """lr=0 -> final loss equals initial loss within 1e-9, batch norm included."""
        extractor = small_extractor()
        before = {k: v.clone() for k, v in extractor.state_dict().items()}

        result = pretrain(extractor, LinearHead(8, 2), separable_dataset(),
                          PretrainConfig(epochs=2, batch_size=16, learning_rate=0.0))

        assert result.final_loss == pytest.approx(result.initial_loss, abs=1e-9)
        for name, value in extractor.state_dict().items():
            assert torch.equal(value, before[name]), name

    def test_non_finite_loss_raises_divergence(self):
        """NaN inputs abort with diagnostics."""
        data = separable_dataset()
        data.images[:] = np.nan

        with pytest.raises(DivergenceError) as info:
            pretrain(small_extractor(), LinearHead(8, 2), data,
                     PretrainConfig(epochs=1, batch_size=16))

        assert info.value.stage == "pretrain"
        assert (info.value.epoch, info.value.step) == (0, 0)

    def test_head_must_match_classes(self):
        """A 3-class head on a 2-class dataset is a contract error."""
        with pytest.raises(ContractError):
            pretrain(small_extractor(), LinearHead(8, 3), separable_dataset(),
                     PretrainConfig(epochs=1))

    def test_checkpoint_metadata(self):
        """The checkpoint records the hash, seed and loss trace."""
        result = pretrain(small_extractor(), LinearHead(8, 2), separable_dataset(),
                          PretrainConfig(epochs=1, batch_size=16, seed=4),
                          config_hash="feedbeef0000")

        meta = result.checkpoint.metadata
        assert meta["config_hash"] == "feedbeef0000"
        assert meta["seed"] == 4
        assert len(meta["loss_trace"]) == 1


    def test_single_example_batches_rejected_with_batch_norm(self):
        """batch_size=1 cannot train a batch-norm backbone."""
        with pytest.raises(ConfigurationError, match="batch_size"):
            pretrain(small_extractor(), LinearHead(8, 2), separable_dataset(),
                     PretrainConfig(epochs=1, batch_size=1))

    def test_single_example_batches_without_batch_norm(self):
        """batch_size=1 trains every epoch when there is no batch norm."""
        extractor = small_extractor(batch_norm=False)
        before = {k: v.clone() for k, v in extractor.state_dict().items()}

        result = pretrain(extractor, LinearHead(8, 2), separable_dataset(n_per_class=5),
                          PretrainConfig(epochs=2, batch_size=1, learning_rate=0.05))

        assert all(np.isfinite(t.loss) for t in result.loss_trace)
        assert any(not torch.equal(v, before[k]) for k, v in extractor.state_dict().items())


class TestBatchIndices:
    """Mini-batch partition of one epoch."""

    def test_even_split(self):
        """Full batches only."""
        batches = batch_indices(np.arange(8), 4)

        assert [b.tolist() for b in batches] == [[0, 1, 2, 3], [4, 5, 6, 7]]

    def test_trailing_single_example_joins_previous_batch(self):
        """No example is dropped and no batch has one example."""
        batches = batch_indices(np.arange(9), 4)

        assert [len(b) for b in batches] == [4, 5]
        assert np.concatenate(batches).tolist() == list(range(9))

    def test_single_example_dataset(self):
        """One example overall stays one batch."""
        assert [b.tolist() for b in batch_indices(np.arange(1), 4)] == [[0]]


class TestBaseHead:
    """Pre-training head selection."""

    def test_linear_default(self):
        """The default base head is a plain linear layer."""
        head = make_base_head(small_extractor(), 6, PretrainConfig())

        assert isinstance(head, LinearHead)
        assert head.fc.out_features == 6

    def test_cosine_switch(self):
        """head='cosine' pre-trains with a cosine classifier."""
        head = make_base_head(small_extractor(), 6, PretrainConfig(head="cosine"))

        assert head.way == 6


class TestBaseTrainingSet:
    """Which classes pre-training sees."""

    def test_validation_classes_join_by_default(self, tiny_dataset):
        """Base + validation classes, relabeled 0..C-1."""
        split = make_split(12, (6, 2, 4), seed=0)

        with_val = base_training_set(tiny_dataset, split, use_validation_classes=True)
        without = base_training_set(tiny_dataset, split, use_validation_classes=False)

        assert with_val.num_classes == 8
        assert without.num_classes == 6
        assert set(with_val.labels.tolist()) == set(range(8))

    def test_no_base_classes(self, tiny_dataset):
        """An empty base set cannot be pre-trained on."""
        split = make_split(12, (0, 0, 12), seed=0)

        with pytest.raises(ConfigurationError):
            base_training_set(tiny_dataset, split, use_validation_classes=True)
