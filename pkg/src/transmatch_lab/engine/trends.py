"""
Paired-trend checks.

Qualitative findings are checked as paired comparisons over shared episodes:
a gap whose 95% CI excludes zero, a paired-majority binomial test, and
monotone-with-tolerance sequences across a sweep.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, List, Sequence

import pandas as pd

from transmatch_lab.core.statistics import PairedGap, paired_gap
from transmatch_lab.models.results import AggregateResult, ResultRecord


@dataclass(frozen=True)
class TrendCheck:
    """Outcome of one trend check, with a human-readable explanation."""
    name: str
    passed: bool
    detail: str

    def __str__(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] {self.name}: {self.detail}"


def _by_method(records: Sequence[ResultRecord], method: str) -> List[ResultRecord]:
    return [r for r in records if r.method == method]


def gap_excludes_zero(records: Sequence[ResultRecord], better: str, worse: str,
                      name: str = "") -> TrendCheck:
    """better - worse > 0 with the paired 95% CI above zero."""
    gap = paired_gap(_by_method(records, better), _by_method(records, worse))
    return TrendCheck(
        name=name or f"{better} > {worse}",
        passed=gap.lower > 0,
        detail=gap.summary(),
    )


def majority_wins(records: Sequence[ResultRecord], better: str, worse: str,
                  alpha: float = 0.05, name: str = "") -> TrendCheck:
    """better wins a majority of non-tied paired episodes (one-sided binomial p < alpha)."""
    gap = paired_gap(_by_method(records, better), _by_method(records, worse))
    return TrendCheck(
        name=name or f"{better} wins majority vs {worse}",
        passed=gap.wins > gap.losses and gap.sign_test_p < alpha,
        detail=gap.summary(),
    )


def non_decreasing(aggregates: Sequence[AggregateResult], name: str = "") -> TrendCheck:
    """
    Means are non-decreasing up to CI overlap: each drop between adjacent
    points must be covered by their combined confidence intervals.
    """
    violations = []
    for prev, cur in zip(aggregates, aggregates[1:]):
        drop = prev.mean_accuracy - cur.mean_accuracy
        if drop > prev.ci95 + cur.ci95:
            violations.append(f"{prev.setting} -> {cur.setting} drops {drop * 100:.2f} pts")
    means = " -> ".join(f"{a.mean_accuracy * 100:.2f}" for a in aggregates)
    return TrendCheck(
        name=name or "non-decreasing",
        passed=not violations,
        detail=means + ("" if not violations else f" ({'; '.join(violations)})"),
    )


def gaps_by_value(records_by_value: Dict[int, Sequence[ResultRecord]], better: str,
                  worse: str) -> Dict[int, PairedGap]:
    """Paired gap better - worse at each sweep value."""
    return {value: paired_gap(_by_method(recs, better), _by_method(recs, worse))
            for value, recs in records_by_value.items()}


def gap_shrinks(gaps: Dict[int, PairedGap], name: str = "") -> TrendCheck:
    """
    The gap is non-increasing over the values up to CI overlap, and the first
    gap exceeds the last with the first gap's CI excluding zero.
    """
    values = sorted(gaps)
    first, last = gaps[values[0]], gaps[values[-1]]
    violations = [
        f"{a} -> {b}" for a, b in zip(values, values[1:])
        if gaps[b].mean_gap - gaps[a].mean_gap > gaps[a].ci95 + gaps[b].ci95
    ]
    passed = not violations and first.mean_gap > last.mean_gap and first.lower > 0
    detail = ", ".join(f"{v}: {gaps[v].mean_gap * 100:+.2f}±{gaps[v].ci95 * 100:.2f}"
                       for v in values)
    return TrendCheck(name=name or "gap shrinks", passed=passed,
                      detail=detail + (f" (increases at {', '.join(violations)})"
                                       if violations else ""))


def no_significant_improvement(aggregates: Sequence[AggregateResult], name: str = "") -> TrendCheck:
    """The last point does not beat the first by more than their combined CIs."""
    first, last = aggregates[0], aggregates[-1]
    gain = last.mean_accuracy - first.mean_accuracy
    return TrendCheck(
        name=name or "no significant improvement",
        passed=gain <= first.ci95 + last.ci95,
        detail=" -> ".join(f"{a.mean_accuracy * 100:.2f}" for a in aggregates),
    )


def gap_table(gaps: Dict[int, PairedGap], parameter: str) -> pd.DataFrame:
    rows = [{parameter: v, **gaps[v].to_dict()} for v in sorted(gaps)]
    return pd.DataFrame(rows)
