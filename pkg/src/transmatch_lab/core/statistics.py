"""
Statistics over episodic results.

Mean accuracy with a 95% confidence interval (1.96 * sample std / sqrt(n)),
and paired comparisons between two methods evaluated on the same episodes.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Dict, Sequence

import numpy as np
from scipy import stats

from transmatch_lab.core.errors import StatisticsError
from transmatch_lab.models.results import AggregateResult, ResultRecord

Z_95 = 1.96


def mean_ci95(values: Sequence[float]) -> tuple:
    """
    (mean, ci95 half-width, sample std) of at least two values.

    Raises:
        StatisticsError: If fewer than two values are given

    Example:
        >>> mean_ci95([0.0, 1.0])
        (0.5, 0.98..., 0.7071...)
    """
    values = np.asarray(values, dtype=np.float64)
    if len(values) < 2:
        raise StatisticsError(
            f"need at least 2 values for a confidence interval, got {len(values)}")
    # sorting makes the float sum independent of record order
    values = np.sort(values)
    std = float(np.std(values, ddof=1))
    return float(np.mean(values)), Z_95 * std / math.sqrt(len(values)), std


def aggregate(records: Sequence[ResultRecord]) -> AggregateResult:
    """
    Summarize records of one method and setting.

    Raises:
        StatisticsError: If fewer than 2 records are given or they mix
                         methods / settings
    """
    if len(records) < 2:
        raise StatisticsError(f"aggregate needs at least 2 records, got {len(records)}")

    methods = {r.method for r in records}
    settings = {r.setting for r in records}
    if len(methods) != 1 or len(settings) != 1:
        raise StatisticsError(
            f"aggregate needs one method and setting, got {sorted(methods)} / {sorted(settings)}"
        )

    mean, ci95, std = mean_ci95([r.accuracy for r in records])
    hashes = sorted({r.config_hash for r in records})
    return AggregateResult(
        method=records[0].method,
        setting=records[0].setting,
        n_episodes=len(records),
        mean_accuracy=mean,
        ci95=ci95,
        std=std,
        config_hash=hashes[0] if len(hashes) == 1 else ",".join(hashes),
    )


@dataclass(frozen=True)
class PairedGap:
    """
    Per-episode accuracy difference a - b over shared episodes.

    Attributes:
        method_a, method_b: Compared methods
        n_episodes: Episodes both methods were scored on
        mean_gap: Mean of a - b
        ci95: Half-width of the 95% CI of the mean gap
        wins / losses / ties: Episodes where a beat / lost to / tied b
        sign_test_p: One-sided binomial p-value that a wins a majority of
                     the non-tied episodes
        t_test_p: Two-sided paired t-test p-value (nan when all gaps are equal)
    """
    method_a: str
    method_b: str
    n_episodes: int
    mean_gap: float
    ci95: float
    wins: int
    losses: int
    ties: int
    sign_test_p: float
    t_test_p: float

    @property
    def excludes_zero(self) -> bool:
        return self.mean_gap - self.ci95 > 0 or self.mean_gap + self.ci95 < 0

    @property
    def lower(self) -> float:
        return self.mean_gap - self.ci95

    @property
    def upper(self) -> float:
        return self.mean_gap + self.ci95

    def to_dict(self) -> dict:
        return asdict(self)

    def summary(self) -> str:
        return (
            f"{self.method_a} - {self.method_b}: {self.mean_gap * 100:+.2f} "
            f"± {self.ci95 * 100:.2f} pts (W/L/T {self.wins}/{self.losses}/{self.ties}, "
            f"sign p={self.sign_test_p:.3g})"
        )


def paired_gap(records_a: Sequence[ResultRecord], records_b: Sequence[ResultRecord]) -> PairedGap:
    """
    Compare two methods on the episodes they share (matched by setting and episode_seed).

    Raises:
        StatisticsError: If fewer than two episodes are shared
    """
    index_b: Dict[tuple, ResultRecord] = {(r.setting, r.episode_seed): r for r in records_b}
    pairs = [(a, index_b[(a.setting, a.episode_seed)]) for a in records_a
             if (a.setting, a.episode_seed) in index_b]
    if len(pairs) < 2:
        raise StatisticsError(f"need at least 2 shared episodes, got {len(pairs)}")

    gaps = np.array([a.accuracy - b.accuracy for a, b in pairs])
    mean, ci95, _ = mean_ci95(gaps)
    wins = int((gaps > 0).sum())
    losses = int((gaps < 0).sum())
    ties = len(gaps) - wins - losses

    return PairedGap(
        method_a=records_a[0].method,
        method_b=records_b[0].method,
        n_episodes=len(pairs),
        mean_gap=mean,
        ci95=ci95,
        wins=wins,
        losses=losses,
        ties=ties,
        sign_test_p=majority_p_value(wins, losses),
        t_test_p=_paired_t_p(pairs),
    )


def majority_p_value(wins: int, losses: int) -> float:
    """One-sided binomial test that wins exceed losses (ties dropped)."""
    if wins + losses == 0:
        return 1.0
    return float(stats.binomtest(wins, wins + losses, p=0.5, alternative="greater").pvalue)


def _paired_t_p(pairs) -> float:
    a = np.array([p[0].accuracy for p in pairs])
    b = np.array([p[1].accuracy for p in pairs])
    if np.allclose(a - b, (a - b)[0]):
        return float("nan")
    return float(stats.ttest_rel(a, b).pvalue)
