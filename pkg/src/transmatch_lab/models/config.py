"""
Run configuration.

Every configurable knob lives in a validating dataclass. A RunConfig is built
from a JSON document with from_dict(); all sub-configs validate before any
work starts, unknown keys are rejected, and the canonical JSON form is hashed
to stamp checkpoints and result records.

Defaults follow the published protocol where it states a value (M=2, T=0.5,
gamma=5, alpha=0.75, Q=15, lr=0.001, weight decay 0.04, momentum 0.9,
batch 16, 64 batches per epoch, 10 imprinting copies).
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from transmatch_lab.core.errors import ConfigurationError
from transmatch_lab.models.episode import AugmentationPolicy

DATASET_KINDS = ("synthetic", "folder", "cifar100")
PRETRAIN_HEADS = ("linear", "cosine")
DISTRACTOR_MODES = ("replace", "add")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ConfigurationError(message)


@dataclass(frozen=True)
class DatasetSpec:
    """
    Where images come from.

    Attributes:
        kind: "synthetic" (Gaussian-blob images), "folder" (one directory per
              class plus manifest.json) or "cifar100" (torchvision)
        path: Dataset root for "folder" / download root for "cifar100"
        cache_dir: If set, decoded arrays are cached there as parquet
        num_classes, examples_per_class, image_size, channels, seed: synthetic only
        download: Allow torchvision to download CIFAR-100
    """
    kind: str = "synthetic"
    path: Optional[str] = None
    cache_dir: Optional[str] = None
    num_classes: int = 40
    examples_per_class: int = 80
    image_size: int = 16
    channels: int = 3
    seed: int = 0
    download: bool = False

    def __post_init__(self):
        _require(self.kind in DATASET_KINDS, f"dataset.kind must be one of {DATASET_KINDS}")
        if self.kind == "folder":
            _require(bool(self.path), "dataset.path is required for kind 'folder'")
        if self.kind == "synthetic":
            _require(self.num_classes >= 2, "dataset.num_classes must be >= 2")
            _require(self.examples_per_class >= 1, "dataset.examples_per_class must be >= 1")
            _require(self.image_size >= 4, "dataset.image_size must be >= 4")
            _require(self.channels >= 1, "dataset.channels must be >= 1")


@dataclass(frozen=True)
class SplitSpec:
    """Class counts for base / validation / novel and the shuffling seed."""
    counts: Tuple[int, int, int] = (24, 6, 10)
    seed: int = 0

    def __post_init__(self):
        _require(len(self.counts) == 3, "split.counts must have three entries")
        _require(all(c >= 0 for c in self.counts), "split.counts must be >= 0")


@dataclass(frozen=True)
class BackboneSpec:
    """
    Desk-scale convolutional feature extractor.

    Four conv blocks (conv3x3, optional batch norm, ReLU, 2x2 max-pool) followed
    by global average pooling and a fully connected embedding layer.
    """
    in_channels: int = 3
    widths: Tuple[int, ...] = (32, 32, 64, 64)
    embedding_dim: int = 64
    batch_norm: bool = True

    def __post_init__(self):
        _require(self.in_channels >= 1, "backbone.in_channels must be >= 1")
        _require(len(self.widths) >= 1, "backbone.widths must not be empty")
        _require(all(w >= 1 for w in self.widths), "backbone.widths must be positive")
        _require(self.embedding_dim >= 1, "backbone.embedding_dim must be >= 1")


@dataclass(frozen=True)
class PretrainConfig:
    """
    Base-class pre-training (cross-entropy, SGD with momentum, step schedule).

    The embedding layer and the classifier train at head_lr_multiplier times
    the base learning rate.
    """
    epochs: int = 20
    batch_size: int = 64
    learning_rate: float = 0.01
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_step_epochs: int = 10
    lr_gamma: float = 0.1
    head_lr_multiplier: float = 10.0
    head: str = "linear"
    cosine_scale: float = 10.0
    use_validation_classes: bool = True
    seed: int = 0

    def __post_init__(self):
        _require(self.epochs >= 0, "pretrain.epochs must be >= 0")
        _require(self.batch_size >= 1, "pretrain.batch_size must be >= 1")
        _require(self.learning_rate >= 0, "pretrain.learning_rate must be >= 0")
        _require(0 <= self.momentum < 1, "pretrain.momentum must be in [0, 1)")
        _require(self.weight_decay >= 0, "pretrain.weight_decay must be >= 0")
        _require(self.lr_step_epochs >= 1, "pretrain.lr_step_epochs must be >= 1")
        _require(0 < self.lr_gamma <= 1, "pretrain.lr_gamma must be in (0, 1]")
        _require(self.head_lr_multiplier > 0, "pretrain.head_lr_multiplier must be > 0")
        _require(self.head in PRETRAIN_HEADS, f"pretrain.head must be one of {PRETRAIN_HEADS}")
        _require(self.cosine_scale > 0, "pretrain.cosine_scale must be > 0")


@dataclass(frozen=True)
class ImprintConfig:
    """
    Weight imprinting.

    Attributes:
        augmentation_copies: Augmented copies per support image (A)
        normalize_first: Normalize each embedding before averaging (else raw mean)
        scale: Logit scale of the imprinted cosine head
    """
    augmentation_copies: int = 10
    normalize_first: bool = True
    scale: float = 10.0

    def __post_init__(self):
        _require(self.augmentation_copies >= 0, "imprint.augmentation_copies must be >= 0")
        _require(self.scale > 0, "imprint.scale must be > 0")


@dataclass(frozen=True)
class SslConfig:
    """
    Semi-supervised fine-tuning (MixMatch, Pseudo-Label and supervised baselines).

    Attributes:
        M: Augmented copies used when guessing a label
        T: Sharpening temperature
        gamma: Weight of the consistency loss
        alpha: Beta(alpha, alpha) parameter for MixUp
        batch_labeled: Labeled batch size B (drawn with replacement)
        batch_unlabeled: Unlabeled batch size
        epochs: Fine-tuning epochs (overridden by epoch_schedule when set)
        batches_per_epoch: Optimizer steps per epoch
        epoch_schedule: [[max_unlabeled, epochs], ...]; first row with U <= max wins
        gamma_rampup: Ramp gamma linearly from 0 over the run instead of constant
        freeze_extractor: Only the cosine head trains
        freeze_batch_norm: Keep batch-norm statistics fixed while fine-tuning
        evaluate_with_ema: Score queries with the EMA model instead of the live one
        pseudo_label_threshold: Confidence gate for Pseudo-Label
        learn_scale: Train the cosine logit scale
        seed: Seed for batch draws, Beta draws and augmentation
    """
    M: int = 2
    T: float = 0.5
    gamma: float = 5.0
    alpha: float = 0.75
    batch_labeled: int = 16
    batch_unlabeled: int = 16
    epochs: int = 10
    batches_per_epoch: int = 64
    learning_rate: float = 0.001
    weight_decay: float = 0.04
    momentum: float = 0.9
    ema_decay: float = 0.999
    epoch_schedule: Tuple[Tuple[int, int], ...] = ()
    gamma_rampup: bool = False
    freeze_extractor: bool = False
    freeze_batch_norm: bool = True
    evaluate_with_ema: bool = False
    pseudo_label_threshold: float = 0.8
    learn_scale: bool = True
    seed: int = 0

    def __post_init__(self):
        _require(self.M >= 1, "ssl.M must be >= 1")
        _require(self.T > 0, "ssl.T must be > 0")
        _require(self.gamma >= 0, "ssl.gamma must be >= 0")
        _require(self.alpha > 0, "ssl.alpha must be > 0")
        _require(self.batch_labeled >= 1, "ssl.batch_labeled must be >= 1")
        _require(self.batch_unlabeled >= 0, "ssl.batch_unlabeled must be >= 0")
        _require(self.epochs >= 0, "ssl.epochs must be >= 0")
        _require(self.batches_per_epoch >= 1, "ssl.batches_per_epoch must be >= 1")
        _require(self.learning_rate >= 0, "ssl.learning_rate must be >= 0")
        _require(self.weight_decay >= 0, "ssl.weight_decay must be >= 0")
        _require(0 <= self.momentum < 1, "ssl.momentum must be in [0, 1)")
        _require(0 <= self.ema_decay <= 1, "ssl.ema_decay must be in [0, 1]")
        _require(0 <= self.pseudo_label_threshold <= 1,
                 "ssl.pseudo_label_threshold must be in [0, 1]")
        for row in self.epoch_schedule:
            _require(len(row) == 2 and row[0] >= 0 and row[1] >= 0,
                     "ssl.epoch_schedule rows must be [max_unlabeled >= 0, epochs >= 0]")

    def epochs_for(self, unlabeled_per_class: int) -> int:
        """Fine-tuning epochs for an episode with the given U."""
        for max_unlabeled, epochs in sorted(self.epoch_schedule):
            if unlabeled_per_class <= max_unlabeled:
                return epochs
        return self.epochs


@dataclass(frozen=True)
class EvaluationSpec:
    """
    Episodic evaluation protocol and sweep grids.

    Attributes:
        way, shot, queries, unlabeled: N, K, Q, U
        n_episodes: Episodes per benchmark cell
        distractor_classes: Classes contributing distractor unlabeled images
        distractor_mode: "replace" (keep the N*U budget) or "add"
        base_seed: Seed from which episode seeds are derived
        paired: Every method sees the same episode sequence
        workers: Worker threads for episodes
        methods: Method names to benchmark
        sweep_unlabeled, sweep_shots, sweep_distractors: Sweep grids
    """
    way: int = 5
    shot: int = 1
    queries: int = 15
    unlabeled: int = 30
    n_episodes: int = 100
    distractor_classes: int = 0
    distractor_mode: str = "replace"
    base_seed: int = 0
    paired: bool = True
    workers: int = 1
    methods: Tuple[str, ...] = ("imprinting", "imprinting_ft", "mixmatch", "pseudo_label",
                                "transmatch")
    sweep_unlabeled: Tuple[int, ...] = (5, 15, 30)
    sweep_shots: Tuple[int, ...] = (1, 3, 5)
    sweep_distractors: Tuple[int, ...] = (1, 2, 3)

    def __post_init__(self):
        _require(self.way >= 1, "evaluation.way must be >= 1")
        _require(self.shot >= 1, "evaluation.shot must be >= 1")
        _require(self.queries >= 1, "evaluation.queries must be >= 1")
        _require(self.unlabeled >= 0, "evaluation.unlabeled must be >= 0")
        _require(self.n_episodes >= 1, "evaluation.n_episodes must be >= 1")
        _require(self.distractor_classes >= 0, "evaluation.distractor_classes must be >= 0")
        _require(self.distractor_mode in DISTRACTOR_MODES,
                 f"evaluation.distractor_mode must be one of {DISTRACTOR_MODES}")
        _require(self.workers >= 1, "evaluation.workers must be >= 1")
        _require(all(u >= 0 for u in self.sweep_unlabeled), "sweep_unlabeled must be >= 0")
        _require(all(k >= 1 for k in self.sweep_shots), "sweep_shots must be >= 1")
        _require(all(d >= 0 for d in self.sweep_distractors), "sweep_distractors must be >= 0")


@dataclass(frozen=True)
class RunConfig:
    """The full configuration of one experiment run."""
    dataset: DatasetSpec = field(default_factory=DatasetSpec)
    split: SplitSpec = field(default_factory=SplitSpec)
    backbone: BackboneSpec = field(default_factory=BackboneSpec)
    pretrain: PretrainConfig = field(default_factory=PretrainConfig)
    imprint: ImprintConfig = field(default_factory=ImprintConfig)
    ssl: SslConfig = field(default_factory=SslConfig)
    augmentation: AugmentationPolicy = field(default_factory=AugmentationPolicy)
    evaluation: EvaluationSpec = field(default_factory=EvaluationSpec)
    output_dir: str = "./runs"

    def __post_init__(self):
        _require(bool(self.output_dir), "output_dir must not be empty")
        if self.dataset.kind == "synthetic":
            _require(sum(self.split.counts) == self.dataset.num_classes,
                     f"split.counts {tuple(self.split.counts)} must sum to "
                     f"dataset.num_classes={self.dataset.num_classes}")
        _require(self.backbone.in_channels == self.dataset.channels,
                 "backbone.in_channels must equal dataset.channels")
        _require(self.pretrain.batch_size >= 2 or not self.backbone.batch_norm,
                 "pretrain.batch_size must be >= 2 with backbone.batch_norm")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunConfig":
        """Build and validate a RunConfig from a parsed JSON document."""
        return _build(cls, data, "config")

    @classmethod
    def from_file(cls, path: Path) -> "RunConfig":
        """Load a JSON config file."""
        path = Path(path)
        if not path.exists():
            raise ConfigurationError(f"Config file not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise ConfigurationError(f"Config file {path} is not valid JSON: {e}") from e
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return _to_plain(dataclasses.asdict(self))

    def canonical_json(self) -> str:
        return canonical_json(self.to_dict())

    @property
    def config_hash(self) -> str:
        """Hash of everything that determines results (output_dir excluded)."""
        d = self.to_dict()
        d.pop("output_dir")
        return config_hash(d)

    def pretrain_hash(self) -> str:
        """Hash of the parts that determine the pre-trained checkpoint."""
        d = self.to_dict()
        return config_hash({k: d[k] for k in ("dataset", "split", "backbone", "pretrain",
                                               "augmentation")})

    def with_output_dir(self, output_dir: str) -> "RunConfig":
        return dataclasses.replace(self, output_dir=output_dir)


def canonical_json(data: dict) -> str:
    return json.dumps(data, sort_keys=True, separators=(",", ":"))


def config_hash(data: dict) -> str:
    """First 12 hex chars of the SHA-256 of the canonical JSON form."""
    return hashlib.sha256(canonical_json(data).encode("utf-8")).hexdigest()[:12]


def _to_plain(value):
    if isinstance(value, dict):
        return {k: _to_plain(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_to_plain(v) for v in value]
    return value


def _to_tuple(value):
    if isinstance(value, list):
        return tuple(_to_tuple(v) for v in value)
    return value


def _build(cls, data: Any, where: str):
    if not isinstance(data, dict):
        raise ConfigurationError(f"{where} must be an object, got {type(data).__name__}")

    known = {f.name: f for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - set(known))
    if unknown:
        raise ConfigurationError(f"{where}: unknown keys {unknown}")

    kwargs = {}
    for name, value in data.items():
        default = known[name].default_factory if known[name].default_factory is not \
            dataclasses.MISSING else None
        nested_cls = type(default()) if default is not None else None
        if nested_cls is not None and dataclasses.is_dataclass(nested_cls):
            kwargs[name] = _build(nested_cls, value, f"{where}.{name}")
        else:
            kwargs[name] = _to_tuple(value)

    try:
        return cls(**kwargs)
    except TypeError as e:
        raise ConfigurationError(f"{where}: {e}") from e


def tiny_config(**overrides) -> RunConfig:
    """
    A fast configuration for smoke tests: small synthetic dataset, narrow backbone.

    Keyword overrides replace whole sub-configs (e.g. ssl=SslConfig(epochs=1)).
    """
    base = RunConfig(
        dataset=DatasetSpec(kind="synthetic", num_classes=12, examples_per_class=30,
                            image_size=8, channels=1, seed=0),
        split=SplitSpec(counts=(6, 0, 6), seed=0),
        backbone=BackboneSpec(in_channels=1, widths=(8, 8), embedding_dim=8),
        pretrain=PretrainConfig(epochs=2, batch_size=32),
        imprint=ImprintConfig(augmentation_copies=2),
        ssl=SslConfig(epochs=1, batches_per_epoch=2, batch_labeled=4, batch_unlabeled=4),
        augmentation=AugmentationPolicy(pad_crop_pixels=1, horizontal_flip_probability=0.5),
        evaluation=EvaluationSpec(way=3, shot=1, queries=3, unlabeled=4, n_episodes=2,
                                  methods=("imprinting",)),
    )
    return dataclasses.replace(base, **overrides)


__all__: List[str] = [
    "DatasetSpec", "SplitSpec", "BackboneSpec", "PretrainConfig", "ImprintConfig",
    "SslConfig", "EvaluationSpec", "RunConfig", "canonical_json", "config_hash",
    "tiny_config", "DATASET_KINDS", "DISTRACTOR_MODES",
]
