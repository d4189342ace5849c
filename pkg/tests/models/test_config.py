"""
Unit tests for RunConfig loading, validation and hashing.
"""

import json
from pathlib import Path

import pytest

from transmatch_lab.core.errors import ConfigurationError
from transmatch_lab.models.config import (
    EvaluationSpec,
    RunConfig,
    SslConfig,
    config_hash,
    tiny_config,
)


class TestDefaults:
    """Defaults carry the published protocol values."""

    def test_mixmatch_defaults(self):
        """M=2, T=0.5, gamma=5, alpha=0.75 out of the box."""
        ssl = SslConfig()

        assert (ssl.M, ssl.T, ssl.gamma, ssl.alpha) == (2, 0.5, 5.0, 0.75)
        assert ssl.learning_rate == 0.001
        assert ssl.weight_decay == 0.04
        assert ssl.batches_per_epoch == 64

    def test_evaluation_defaults(self):
        """Q=15 queries per class, paired episodes."""
        evaluation = EvaluationSpec()

        assert evaluation.queries == 15
        assert evaluation.paired is True
        assert evaluation.distractor_mode == "replace"


class TestValidation:
    """Every sub-config validates on construction."""

    def test_negative_temperature_rejected(self):
        """T must be positive."""
        with pytest.raises(ConfigurationError, match="ssl.T"):
            SslConfig(T=0.0)

    def test_unknown_key_rejected(self):
        """Typos in a config file are errors, not silently ignored."""
        with pytest.raises(ConfigurationError, match="unknown keys"):
            RunConfig.from_dict({"ssl": {"gama": 5}})

    def test_nested_validation_runs_before_work(self):
        """An invalid nested value fails in from_dict."""
        with pytest.raises(ConfigurationError, match="evaluation.way"):
            RunConfig.from_dict({"evaluation": {"way": 0}})

    def test_folder_needs_path(self):
        """A folder dataset without a path is a configuration error."""
        with pytest.raises(ConfigurationError, match="dataset.path"):
            RunConfig.from_dict({"dataset": {"kind": "folder"}})

    def test_split_must_cover_synthetic_classes(self):
        """Split counts must sum to the synthetic class count."""
        with pytest.raises(ConfigurationError, match="must sum"):
            RunConfig.from_dict({"split": {"counts": [1, 1, 1]}})

    def test_channels_must_match_backbone(self):
        """The backbone's input channels follow the dataset."""
        with pytest.raises(ConfigurationError, match="in_channels"):
            RunConfig.from_dict({"dataset": {"channels": 1}})

    def test_single_example_batches_need_no_batch_norm(self):
        """Batch norm cannot train on batches of one."""
        with pytest.raises(ConfigurationError, match="pretrain.batch_size"):
            RunConfig.from_dict({"pretrain": {"batch_size": 1}})

        config = RunConfig.from_dict({"pretrain": {"batch_size": 1},
                                      "backbone": {"batch_norm": False}})
        assert config.pretrain.batch_size == 1

    def test_missing_file(self, tmp_path):
        """A missing config file is a configuration error."""
        with pytest.raises(ConfigurationError, match="not found"):
            RunConfig.from_file(tmp_path / "nope.json")

    def test_invalid_json(self, tmp_path):
        """Malformed JSON is a configuration error."""
        path = tmp_path / "bad.json"
        path.write_text("{not json")

        with pytest.raises(ConfigurationError, match="not valid JSON"):
            RunConfig.from_file(path)


class TestEpochSchedule:
    """U-dependent fine-tuning length."""

    def test_first_matching_row_wins(self):
        """U <= 50 trains 10 epochs, larger pools 20."""
        ssl = SslConfig(epochs=20, epoch_schedule=((50, 10),))

        assert ssl.epochs_for(30) == 10
        assert ssl.epochs_for(50) == 10
        assert ssl.epochs_for(100) == 20

    def test_without_schedule(self):
        """No schedule means the flat epoch count."""
        assert SslConfig(epochs=7).epochs_for(500) == 7


class TestHashing:
    """Canonical form and hash."""

    def test_round_trip_through_json(self):
        """to_dict -> JSON -> from_dict reproduces the same config and hash."""
        # Arrange
        config = tiny_config()

        # Act
        loaded = RunConfig.from_dict(json.loads(json.dumps(config.to_dict())))

        # Assert
        assert loaded == config
        assert loaded.config_hash == config.config_hash

    def test_hash_is_twelve_hex_chars(self):
        """Short SHA-256 prefix."""
        h = tiny_config().config_hash

        assert len(h) == 12
        int(h, 16)

    def test_hash_ignores_key_order(self):
        """Canonical JSON sorts keys."""
        assert config_hash({"a": 1, "b": 2}) == config_hash({"b": 2, "a": 1})

    def test_hash_changes_with_results_relevant_fields(self):
        """Changing T changes the run hash but not the pre-training hash."""
        base = tiny_config()
        other = tiny_config(ssl=SslConfig(T=0.25, epochs=1, batches_per_epoch=2,
                                          batch_labeled=4, batch_unlabeled=4))

        assert base.config_hash != other.config_hash
        assert base.pretrain_hash() == other.pretrain_hash()

    def test_output_dir_not_hashed(self):
        """Moving the output directory does not change the run identity."""
        base = tiny_config()

        assert base.with_output_dir("/elsewhere").config_hash == base.config_hash


class TestShippedConfigs:
    """The example configs under configs/ stay loadable."""

    CONFIG_DIR = Path(__file__).resolve().parents[2] / "configs"

    @pytest.mark.parametrize("name", ["tiny.json", "desk.json", "cifar100.json"])
    def test_loads(self, name):
        """Each file validates into a RunConfig."""
        config = RunConfig.from_file(self.CONFIG_DIR / name)

        assert len(config.config_hash) == 12

    def test_tiny_matches_tiny_config(self):
        """configs/tiny.json describes the same data and network as tiny_config()."""
        config = RunConfig.from_file(self.CONFIG_DIR / "tiny.json")

        assert config.pretrain_hash() == tiny_config().pretrain_hash()
