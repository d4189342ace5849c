"""
Method Comparison Tables and Plots

Renders aggregate tables (aligned text and CSV), the paired per-episode table
and sweep plots from stored ResultRecords only. Every output depends on the
records alone, so rendering the same records twice gives byte-identical files.

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import pandas as pd  # noqa: E402

from transmatch_lab.core.errors import StatisticsError  # noqa: E402
from transmatch_lab.core.statistics import aggregate  # noqa: E402
from transmatch_lab.engine.benchmark import paired_table  # noqa: E402
from transmatch_lab.engine.results_store import read_records, record_files  # noqa: E402
from transmatch_lab.engine.trends import TrendCheck, gap_excludes_zero  # noqa: E402
from transmatch_lab.models.results import AggregateResult, ResultRecord  # noqa: E402

logger = logging.getLogger(__name__)

METHOD_ORDER = ["imprinting", "imprinting_ft", "mixmatch", "pseudo_label", "transmatch"]

# paired gaps in the report are taken against this method
REFERENCE_METHOD = "transmatch"

# records stream stem -> swept ResultRecord field
SWEEP_PARAMETERS = {
    "sweep_unlabeled": "unlabeled",
    "sweep_shots": "shot",
    "distractors": "distractor_classes",
}

AXIS_LABELS = {
    "unlabeled": "Unlabeled images per class (U)",
    "shot": "Labeled images per class (K)",
    "distractor_classes": "Distractor classes",
}


def method_key(method: str) -> Tuple[int, str]:
    return (METHOD_ORDER.index(method) if method in METHOD_ORDER else len(METHOD_ORDER), method)


def setting_key(record: ResultRecord) -> tuple:
    return (record.way, record.shot, record.queries, record.unlabeled,
            record.distractor_classes, record.setting)


def sort_records(records: Sequence[ResultRecord]) -> List[ResultRecord]:
    return sorted(records, key=lambda r: (setting_key(r), method_key(r.method), r.episode_index))


def aggregate_records(records: Sequence[ResultRecord]) -> List[AggregateResult]:
    """
    One AggregateResult per (setting, method) with at least two records,
    ordered by setting then method.
    """
    groups: Dict[tuple, List[ResultRecord]] = defaultdict(list)
    for r in sort_records(records):
        groups[(setting_key(r), method_key(r.method))].append(r)

    aggregates = []
    for key in sorted(groups):
        group = groups[key]
        if len(group) < 2:
            logger.warning(f"Only one episode for {group[0].method} [{group[0].setting}]; "
                           "no confidence interval")
            continue
        aggregates.append(aggregate(group))
    return aggregates


def format_aggregate_table(aggregates: Sequence[AggregateResult], title: str = "RESULTS") -> str:
    """
    Aligned text table of mean accuracy ± 95% CI.

    Returns:
        Formatted table as string
    """
    if not aggregates:
        return "No results to compare"

    lines = []
    lines.append("=" * 80)
    lines.append(title)
    hashes = sorted({a.config_hash for a in aggregates})
    lines.append(f"config: {', '.join(hashes)}")
    lines.append("=" * 80)

    header = f"{'Setting':<18} {'Method':<16} {'Episodes':>9} {'Accuracy (%)':>18} {'Std':>8}"
    lines.append(header)
    lines.append("-" * 80)

    for agg in aggregates:
        row = (
            f"{agg.setting:<18} "
            f"{agg.method:<16} "
            f"{agg.n_episodes:>9} "
            f"{agg.summary():>18} "
            f"{agg.std * 100:>8.2f}"
        )
        lines.append(row)

    lines.append("-" * 80)
    return "\n".join(lines)


def aggregates_frame(aggregates: Sequence[AggregateResult]) -> pd.DataFrame:
    columns = ["setting", "method", "n_episodes", "mean_accuracy", "ci95", "std", "config_hash"]
    return pd.DataFrame([{c: getattr(a, c) for c in columns} for a in aggregates],
                        columns=columns)


def paired_checks(records: Sequence[ResultRecord],
                  reference: str = REFERENCE_METHOD) -> List[TrendCheck]:
    """
    Paired gap of the reference method against every other method, per setting.

    Settings where the two methods share fewer than two episodes are skipped.
    """
    by_setting: Dict[tuple, List[ResultRecord]] = defaultdict(list)
    for r in sort_records(records):
        by_setting[setting_key(r)].append(r)

    checks = []
    for key in sorted(by_setting):
        group = by_setting[key]
        methods = {r.method for r in group}
        if reference not in methods:
            continue
        for other in sorted(methods - {reference}, key=method_key):
            try:
                checks.append(gap_excludes_zero(group, reference, other,
                                                name=f"{reference} > {other} [{key[-1]}]"))
            except StatisticsError:
                continue
    return checks


def plot_sweep(aggregates: Sequence[AggregateResult], records: Sequence[ResultRecord],
               parameter: str, path: Path, title: str) -> Optional[Path]:
    """
    Accuracy vs the swept parameter, one line per method with CI error bars.

    Returns:
        The written path, or None when there is nothing to plot
    """
    value_of = {r.setting: getattr(r, parameter) for r in records}
    series: Dict[str, List[Tuple[int, float, float]]] = defaultdict(list)
    for agg in aggregates:
        series[agg.method].append((value_of[agg.setting], agg.mean_accuracy, agg.ci95))
    if not series:
        return None

    fig, ax = plt.subplots(figsize=(6, 4))
    for method in sorted(series, key=method_key):
        points = sorted(series[method])
        ax.errorbar([p[0] for p in points], [p[1] * 100 for p in points],
                    yerr=[p[2] * 100 for p in points], marker="o", capsize=3, label=method)

    ax.set_xlabel(AXIS_LABELS.get(parameter, parameter))
    ax.set_ylabel("Accuracy (%)")
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100, metadata={"Software": None})
    plt.close(fig)
    return path


@dataclass
class ReportSummary:
    """What write_report produced."""
    tables: List[str] = field(default_factory=list)
    files: List[Path] = field(default_factory=list)
    records: int = 0
    warnings: int = 0

    def summary(self) -> str:
        return (f"{len(self.files)} file(s) written from {self.records} record(s); "
                f"{self.warnings} warning(s)")


def write_report(results_dir: Path, output_dir: Optional[Path] = None) -> ReportSummary:
    """
    Regenerate every table and plot from the record streams in results_dir.

    For each <name>.jsonl stream writes <name>_aggregates.txt,
    <name>_aggregates.csv, <name>_paired.csv, <name>_gaps.txt when the stream
    holds transmatch next to other methods and, for sweeps, <name>.png.

    Args:
        results_dir: Directory holding *.jsonl record streams
        output_dir: Where to write (default: results_dir / "report")

    Returns:
        ReportSummary (text tables, written files, record and warning counts)
    """
    results_dir = Path(results_dir)
    output_dir = Path(output_dir) if output_dir else results_dir / "report"
    output_dir.mkdir(parents=True, exist_ok=True)

    report = ReportSummary()
    for stream in record_files(results_dir):
        read = read_records([stream])
        report.warnings += read.warnings
        report.records += len(read.records)
        if not read.records:
            continue

        name = stream.stem
        records = sort_records(read.records)
        aggregates = aggregate_records(records)
        table = format_aggregate_table(aggregates, title=name.upper().replace("_", " "))
        report.tables.append(table)

        text_path = output_dir / f"{name}_aggregates.txt"
        text_path.write_text(table + "\n", encoding="utf-8")
        csv_path = output_dir / f"{name}_aggregates.csv"
        aggregates_frame(aggregates).to_csv(csv_path, index=False)
        paired_path = output_dir / f"{name}_paired.csv"
        paired_table(records).to_csv(paired_path, index=False)
        report.files += [text_path, csv_path, paired_path]

        checks = paired_checks(records)
        if checks:
            gaps_text = "\n".join(["PAIRED GAPS"] + [str(c) for c in checks])
            gaps_path = output_dir / f"{name}_gaps.txt"
            gaps_path.write_text(gaps_text + "\n", encoding="utf-8")
            report.tables.append(gaps_text)
            report.files.append(gaps_path)

        parameter = SWEEP_PARAMETERS.get(name)
        if parameter:
            hashes = ", ".join(sorted({r.config_hash for r in records}))
            plot = plot_sweep(aggregates, records, parameter, output_dir / f"{name}.png",
                              title=f"{name} (config {hashes})")
            if plot is not None:
                report.files.append(plot)

    logger.info(f"Report: {report.summary()}")
    return report
