"""
Unit tests for episode-level fine-tuning (TransMatch, Pseudo-Label, supervised).

All runs are a few SGD steps on the tiny synthetic episode from conftest.
"""

import dataclasses

import numpy as np
import pytest
import torch

from transmatch_lab.core.errors import ContractError, DivergenceError
from transmatch_lab.core.finetune import (
    finetune_pseudo_label,
    finetune_supervised,
    finetune_transmatch,
)
from transmatch_lab.core.imprint import imprint_from_episode
from transmatch_lab.core.networks import CosineHead, FewShotClassifier, LinearHead
from transmatch_lab.models.config import SslConfig
from transmatch_lab.models.episode import AugmentationPolicy


def ssl(**overrides) -> SslConfig:
    fields = dict(epochs=2, batches_per_epoch=3, batch_labeled=4, batch_unlabeled=4,
                  learning_rate=0.01)
    fields.update(overrides)
    return SslConfig(**fields)


def imprinted(extractor, episode) -> CosineHead:
    return imprint_from_episode(extractor, episode, augmentation_copies=0)


class TestFinetuneTransmatch:
    """MixMatch fine-tuning from an imprinted head."""

    def test_zero_epochs_is_imprinting(self, extractor, episode):
        """epochs=0 leaves the classifier as imprinted."""
        # Arrange
        head = imprinted(extractor, episode)
        baseline = FewShotClassifier(extractor, head)

        # Act
        result = finetune_transmatch(extractor, head, episode, ssl(epochs=0))

        # Assert
        assert result.trace == []
        assert result.final_loss is None
        assert torch.allclose(result.model.predict_proba(episode.query_images),
                              baseline.predict_proba(episode.query_images))

    def test_trace_per_epoch(self, extractor, episode):
        """One EpochLoss per epoch with l1, l2 and the weight."""
        result = finetune_transmatch(extractor, imprinted(extractor, episode), episode, ssl(),
                                     policy=AugmentationPolicy())

        assert [t.epoch for t in result.trace] == [0, 1]
        assert all(np.isfinite(t.loss) for t in result.trace)
        assert all(t.weight == 5.0 for t in result.trace)
        assert all(t.unsupervised >= 0 for t in result.trace)

    def test_inputs_not_modified(self, extractor, episode):
        """The caller's extractor and head keep their weights."""
        head = imprinted(extractor, episode)
        head_before = head.weight.detach().clone()
        extractor_before = {k: v.clone() for k, v in extractor.state_dict().items()}

        finetune_transmatch(extractor, head, episode, ssl())

        assert torch.equal(head.weight, head_before)
        for name, value in extractor.state_dict().items():
            assert torch.equal(value, extractor_before[name])

    def test_deterministic(self, extractor, episode):
        """Fixed seeds give identical loss traces."""
        head = imprinted(extractor, episode)

        a = finetune_transmatch(extractor, head, episode, ssl(), policy=AugmentationPolicy())
        b = finetune_transmatch(extractor, head, episode, ssl(), policy=AugmentationPolicy())

        assert [t.to_dict() for t in a.trace] == [t.to_dict() for t in b.trace]

    def test_head_rows_stay_unit_norm(self, extractor, episode):
        """Rows are re-normalized after every step."""
        result = finetune_transmatch(extractor, imprinted(extractor, episode), episode, ssl())

        assert torch.allclose(result.model.head.weight.norm(dim=1), torch.ones(3), atol=1e-5)

    def test_empty_pool_reduces_to_supervised_mixup(self, extractor, episode):
        """gamma=0 with no unlabeled images: the consistency term is zero."""
        no_pool = dataclasses.replace(
            episode,
            unlabeled_images=episode.unlabeled_images[:0],
            unlabeled_per_class=0,
        )

        result = finetune_transmatch(extractor, imprinted(extractor, episode), no_pool,
                                     ssl(gamma=0.0))

        assert all(t.unsupervised == 0.0 for t in result.trace)
        assert all(t.loss == pytest.approx(t.supervised) for t in result.trace)

    def test_gamma_rampup(self, extractor, episode):
        """With ramp-up the weight reaches gamma on the last step."""
        result = finetune_transmatch(extractor, imprinted(extractor, episode), episode,
                                     ssl(gamma_rampup=True))

        assert result.trace[0].weight < 5.0
        assert result.trace[-1].weight == pytest.approx(5.0)

    def test_epoch_schedule(self, extractor, episode):
        """The U-dependent schedule overrides the flat epoch count."""
        result = finetune_transmatch(extractor, imprinted(extractor, episode), episode,
                                     ssl(epochs=5, epoch_schedule=((10, 1),)))

        assert len(result.trace) == 1

    def test_evaluate_with_ema(self, extractor, episode):
        """evaluation_model is the EMA snapshot when configured."""
        result = finetune_transmatch(extractor, imprinted(extractor, episode), episode,
                                     ssl(evaluate_with_ema=True))

        assert result.evaluation_model is result.ema_model
        assert result.ema_model is not result.model

    def test_freeze_extractor(self, extractor, episode):
        """Only the head trains when the extractor is frozen."""
        result = finetune_transmatch(extractor, imprinted(extractor, episode), episode,
                                     ssl(freeze_extractor=True))

        for name, value in result.model.extractor.state_dict().items():
            assert torch.equal(value, extractor.state_dict()[name])

    def test_random_head_for_mixmatch_baseline(self, extractor, episode):
        """A random cosine head is accepted (MixMatch without imprinting)."""
        head = CosineHead.random(3, extractor.embedding_dim,
                                 generator=torch.Generator().manual_seed(0))

        result = finetune_transmatch(extractor, head, episode, ssl())

        assert result.model.way == 3

    def test_way_mismatch(self, extractor, episode):
        """A 4-way head on a 3-way episode is a contract error."""
        with pytest.raises(ContractError):
            finetune_transmatch(extractor, CosineHead.random(4, extractor.embedding_dim),
                                episode, ssl())

    def test_linear_head_rejected(self, extractor, episode):
        """Fine-tuning needs a cosine head."""
        with pytest.raises(ContractError):
            finetune_transmatch(extractor, LinearHead(extractor.embedding_dim, 3), episode,
                                ssl())

    def test_divergence_reports_diagnostics(self, extractor, episode):
        """Non-finite support images make the loss non-finite."""
        broken = dataclasses.replace(episode,
                                     support_images=np.full_like(episode.support_images, np.nan))
        head = CosineHead.random(3, extractor.embedding_dim)

        with pytest.raises(DivergenceError) as info:
            finetune_transmatch(extractor, head, broken, ssl())

        assert info.value.stage == "transmatch"
        assert info.value.epoch == 0
        assert info.value.loss_trace == []


class TestFinetunePseudoLabel:
    """Confidence-gated pseudo-labels."""

    def test_gate_closed(self, extractor, episode):
        """threshold=1.0 accepts nothing: plain supervised fine-tuning."""
        result = finetune_pseudo_label(extractor, imprinted(extractor, episode), episode,
                                       ssl(pseudo_label_threshold=1.0, learn_scale=False))

        assert sum(t.accepted_unlabeled for t in result.trace) == 0
        assert all(t.unsupervised == 0.0 for t in result.trace)

    def test_gate_open(self, extractor, episode):
        """threshold=0 accepts the whole unlabeled batch every step."""
        config = ssl(pseudo_label_threshold=0.0)

        result = finetune_pseudo_label(extractor, imprinted(extractor, episode), episode, config)

        per_epoch = config.batches_per_epoch * config.batch_unlabeled
        assert [t.accepted_unlabeled for t in result.trace] == [per_epoch, per_epoch]

    def test_weight_ramps_over_epochs(self, extractor, episode):
        """The pseudo-label weight goes 0 -> 1 linearly across epochs."""
        result = finetune_pseudo_label(extractor, imprinted(extractor, episode), episode,
                                       ssl(epochs=3))

        assert [t.weight for t in result.trace] == pytest.approx([0.0, 0.5, 1.0])

    def test_single_epoch_uses_full_weight(self, extractor, episode):
        """With one epoch the pseudo-labels count fully from the start."""
        result = finetune_pseudo_label(extractor, imprinted(extractor, episode), episode,
                                       ssl(epochs=1))

        assert result.trace[0].weight == 1.0


class TestFinetuneSupervised:
    """Imprinting + FT."""

    def test_zero_epochs_is_imprinting(self, extractor, episode):
        """epochs=0 leaves the imprinted head untouched."""
        head = imprinted(extractor, episode)

        result = finetune_supervised(extractor, head, episode, ssl(epochs=0))

        assert torch.allclose(result.model.head.weight, head.weight)

    def test_memorizes_support(self, extractor, episode):
        """N*K support points are classified correctly after training."""
        result = finetune_supervised(extractor, imprinted(extractor, episode), episode,
                                     ssl(epochs=3, batches_per_epoch=8))

        predicted = result.model.predict_proba(episode.support_images).argmax(dim=1).numpy()
        np.testing.assert_array_equal(predicted, episode.support_labels)

    def test_ignores_unlabeled_pool(self, extractor, episode):
        """Emptying the pool does not change the run."""
        head = imprinted(extractor, episode)
        no_pool = dataclasses.replace(episode, unlabeled_images=episode.unlabeled_images[:0])

        a = finetune_supervised(extractor, head, episode, ssl())
        b = finetune_supervised(extractor, head, no_pool, ssl())

        assert [t.loss for t in a.trace] == [t.loss for t in b.trace]
