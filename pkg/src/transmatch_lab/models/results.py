"""
Result models for episodic evaluation.

A ResultRecord is the fundamental unit of a benchmark: one method scored on
one episode. AggregateResult summarizes many records of the same method and
setting as mean accuracy with a 95% confidence interval.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Optional

from transmatch_lab.core.errors import ConfigurationError

# Fields excluded from the replay contract (they depend on the wall clock)
TIMING_FIELDS = ("wall_time", "started_at", "finished_at")


@dataclass(frozen=True)
class EpisodeSetting:
    """
    The cell of an experiment grid an episode belongs to.

    Attributes:
        way, shot, queries, unlabeled: N, K, Q, U
        distractor_classes: Number of distractor classes (0 = none)
        distractor_mode: "replace" or "add"
    """
    way: int
    shot: int
    queries: int
    unlabeled: int
    distractor_classes: int = 0
    distractor_mode: str = "replace"

    @property
    def label(self) -> str:
        """Compact label, e.g. 5w1s15q30u or 5w1s15q30u2d."""
        text = f"{self.way}w{self.shot}s{self.queries}q{self.unlabeled}u"
        if self.distractor_classes:
            text += f"{self.distractor_classes}d"
            if self.distractor_mode != "replace":
                text += f"-{self.distractor_mode}"
        return text


@dataclass(frozen=True)
class ResultRecord:
    """
    One method evaluated on one episode.

    Attributes:
        method: Registered method name
        setting: The EpisodeSetting label the episode was sampled under
        way, shot, queries, unlabeled, distractor_classes: Setting fields, flattened
        episode_index: Position of the episode in the run's sequence
        episode_seed: Seed that replays the episode exactly
        correct, total: Query predictions that matched / number of queries
        accuracy: correct / total
        config_hash: Hash of the RunConfig that produced this record
        wall_time: Seconds spent adapting and scoring (not part of the replay contract)
        started_at, finished_at: ISO timestamps (not part of the replay contract)
        final_loss: Last epoch's training loss, if the method trains
    """
    method: str
    setting: str
    way: int
    shot: int
    queries: int
    unlabeled: int
    distractor_classes: int
    episode_index: int
    episode_seed: int
    correct: int
    total: int
    accuracy: float
    config_hash: str
    wall_time: float = 0.0
    started_at: str = ""
    finished_at: str = ""
    final_loss: Optional[float] = None

    def __post_init__(self):
        if self.total <= 0:
            raise ConfigurationError(f"total must be positive, got {self.total}")
        if not 0 <= self.correct <= self.total:
            raise ConfigurationError(f"correct={self.correct} outside [0, {self.total}]")
        if not 0.0 <= self.accuracy <= 1.0:
            raise ConfigurationError(f"accuracy must be in [0, 1], got {self.accuracy}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ResultRecord":
        return cls(**data)

    def replay_key(self) -> tuple:
        """Every field except the timing ones; equal across identical reruns."""
        d = self.to_dict()
        return tuple((k, d[k]) for k in sorted(d) if k not in TIMING_FIELDS)

    def __str__(self) -> str:
        return (
            f"ResultRecord({self.method} {self.setting} #{self.episode_index} "
            f"seed={self.episode_seed}): {self.correct}/{self.total} = {self.accuracy:.4f}"
        )


@dataclass(frozen=True)
class AggregateResult:
    """
    Mean accuracy with 95% confidence interval over many episodes.

    ci95 = 1.96 * sample_std / sqrt(n_episodes)
    """
    method: str
    setting: str
    n_episodes: int
    mean_accuracy: float
    ci95: float
    std: float = 0.0
    config_hash: str = ""
    extra: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        """Percentage with interval, e.g. '63.02 ± 1.07'."""
        return f"{self.mean_accuracy * 100:.2f} ± {self.ci95 * 100:.2f}"

    def __str__(self) -> str:
        return f"{self.method} [{self.setting}] n={self.n_episodes}: {self.summary()}"
