"""
Episodic Benchmark Engine

Samples N-way K-shot episodes from the novel classes, lets every method adapt
to each episode, scores the query set and aggregates mean accuracy with a 95%
confidence interval. In the paired design all methods see the identical
episode sequence; sweeps re-run the benchmark over a grid of U, K or
distractor-class counts with the same episode seeds.

Episodes are independent work items executed by a thread pool; records are
persisted through a single ResultStore writer as they complete.

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import dataclasses
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Dict, Iterable, List, Optional, Sequence

import pandas as pd
import torch

from transmatch_lab.core.errors import ConfigurationError, ContractError
from transmatch_lab.core.networks import FeatureExtractor
from transmatch_lab.core.sampling import episode_seeds, sample_episode
from transmatch_lab.core.statistics import aggregate
from transmatch_lab.engine.registry import get_method, validate_methods
from transmatch_lab.engine.results_store import ResultStore
from transmatch_lab.interfaces import EpisodeModel
from transmatch_lab.models.config import RunConfig
from transmatch_lab.models.episode import Episode, ImageDataset
from transmatch_lab.models.results import AggregateResult, EpisodeSetting, ResultRecord

logger = logging.getLogger(__name__)


def evaluate_episode(
    model: EpisodeModel,
    episode: Episode,
    method: str = "",
    config_hash: str = "",
    episode_index: int = 0,
    setting: Optional[EpisodeSetting] = None
) -> ResultRecord:
    """
    Score a model on all N*Q queries of an episode.

    Args:
        model: N-way classifier for this episode
        episode: The episode (query labels are episode-local 0..N-1)
        method, config_hash, episode_index: Copied into the record
        setting: Setting the episode was sampled under (derived from the
                 episode when omitted)

    Returns:
        ResultRecord with correct / total over the query set

    Raises:
        ContractError: If the model's way differs from the episode's
    """
    if model.way != episode.way:
        raise ContractError(f"model is {model.way}-way but the episode is {episode.way}-way")

    if setting is None:
        setting = EpisodeSetting(way=episode.way, shot=episode.shot, queries=episode.queries,
                                 unlabeled=episode.unlabeled_per_class,
                                 distractor_classes=len(episode.distractor_classes))

    with torch.no_grad():
        predictions = model.predict_proba(episode.query_images).argmax(dim=1).numpy()
    total = len(episode.query_labels)
    correct = int((predictions == episode.query_labels).sum())

    return ResultRecord(
        method=method,
        setting=setting.label,
        way=setting.way,
        shot=setting.shot,
        queries=setting.queries,
        unlabeled=setting.unlabeled,
        distractor_classes=setting.distractor_classes,
        episode_index=episode_index,
        episode_seed=episode.episode_seed,
        correct=correct,
        total=total,
        accuracy=correct / total,
        config_hash=config_hash,
    )


@dataclass
class BenchmarkResult:
    """
    Records and aggregates of one benchmark cell (one setting, several methods).

    Attributes:
        setting: The EpisodeSetting of every episode
        methods: Methods in the order they were requested
        records: All records, ordered by method then episode_index
        aggregates: Method -> AggregateResult (absent for single-episode runs)
        paired: Whether all methods saw the same episodes
    """
    setting: EpisodeSetting
    methods: List[str]
    records: List[ResultRecord] = field(default_factory=list)
    aggregates: Dict[str, AggregateResult] = field(default_factory=dict)
    paired: bool = True

    def records_for(self, method: str) -> List[ResultRecord]:
        return [r for r in self.records if r.method == method]

    def paired_table(self) -> pd.DataFrame:
        """One row per episode, one accuracy column per method."""
        return paired_table(self.records)

    def summary(self) -> str:
        lines = [f"Setting {self.setting.label} ({'paired' if self.paired else 'unpaired'})"]
        for method in self.methods:
            agg = self.aggregates.get(method)
            if agg is not None:
                lines.append(f"  {method:<15} {agg.summary():>16}  (n={agg.n_episodes})")
        return "\n".join(lines)


class BenchmarkEngine:
    """
    Runs few-shot methods over sampled episodes.

    Example:
        engine = BenchmarkEngine(dataset, novel_classes, extractor, config,
                                 store=ResultStore(run_dir / "benchmark.jsonl"))
        result = engine.run(["imprinting", "transmatch"], setting)
        print(result.summary())
    """

    def __init__(
        self,
        dataset: ImageDataset,
        novel_classes: Iterable[int],
        extractor: FeatureExtractor,
        config: RunConfig,
        store: Optional[ResultStore] = None,
        workers: Optional[int] = None
    ):
        """
        Initialize the engine.

        Args:
            dataset: Full dataset (episodes draw from novel_classes only)
            novel_classes: Class ids episodes may use
            extractor: Pre-trained extractor shared (read-only) by every method
            config: RunConfig; its hash stamps every record
            store: Where records are appended as they complete (optional)
            workers: Worker threads (default: config.evaluation.workers)
        """
        self.dataset = dataset
        self.novel_classes = sorted(novel_classes)
        self.extractor = extractor.eval()
        self.config = config
        self.store = store
        self.workers = workers or config.evaluation.workers
        self.config_hash = config.config_hash

    def default_setting(self) -> EpisodeSetting:
        e = self.config.evaluation
        return EpisodeSetting(way=e.way, shot=e.shot, queries=e.queries, unlabeled=e.unlabeled,
                              distractor_classes=e.distractor_classes,
                              distractor_mode=e.distractor_mode)

    def sample(self, setting: EpisodeSetting, seed: int) -> Episode:
        return sample_episode(
            self.dataset,
            self.novel_classes,
            way=setting.way,
            shot=setting.shot,
            queries=setting.queries,
            unlabeled=setting.unlabeled,
            num_distractor_classes=setting.distractor_classes,
            seed=seed,
            distractor_mode=setting.distractor_mode,
        )

    def run(
        self,
        methods: Sequence[str],
        setting: Optional[EpisodeSetting] = None,
        n_episodes: Optional[int] = None,
        base_seed: Optional[int] = None,
        paired: Optional[bool] = None
    ) -> BenchmarkResult:
        """
        Evaluate every method on n_episodes episodes of one setting.

        Args:
            methods: Registered method names
            setting: Episode setting (default: from config.evaluation)
            n_episodes: Episodes per method (default: config)
            base_seed: Seed the episode seeds derive from (default: config)
            paired: Share one episode sequence across methods (default: config)

        Returns:
            BenchmarkResult

        Raises:
            UnknownMethodError: If a method name is not registered
            ConfigurationError: If n_episodes < 1
        """
        e = self.config.evaluation
        methods = validate_methods(methods)
        setting = setting or self.default_setting()
        n_episodes = e.n_episodes if n_episodes is None else n_episodes
        base_seed = e.base_seed if base_seed is None else base_seed
        paired = e.paired if paired is None else paired
        if n_episodes < 1:
            raise ConfigurationError(f"n_episodes must be >= 1, got {n_episodes}")

        logger.info(f"Benchmark {setting.label}: {', '.join(methods)} x {n_episodes} episodes "
                    f"({'paired' if paired else 'unpaired'}, {self.workers} worker(s))")

        # one seed stream shared by all methods when paired, one per method otherwise
        streams = {m: 0 if paired else i + 1 for i, m in enumerate(methods)}
        episodes: Dict[int, List[Episode]] = {}
        for stream in sorted(set(streams.values())):
            seeds = episode_seeds(base_seed, n_episodes, stream=stream)
            episodes[stream] = [self.sample(setting, s) for s in seeds]

        adapters = {m: get_method(m, self.extractor, self.config) for m in methods}
        tasks = [(m, i) for m in methods for i in range(n_episodes)]

        def run_task(task) -> ResultRecord:
            method, index = task
            return self._run_episode(adapters[method], method, episodes[streams[method]][index],
                                     index, setting)

        if self.workers > 1:
            with ThreadPoolExecutor(max_workers=self.workers) as pool:
                records = list(pool.map(run_task, tasks))
        else:
            records = [run_task(t) for t in tasks]

        result = BenchmarkResult(setting=setting, methods=methods, records=records,
                                 paired=paired)
        for method in methods:
            method_records = result.records_for(method)
            if len(method_records) >= 2:
                result.aggregates[method] = aggregate(method_records)
                logger.info(f"  {method:<15} {result.aggregates[method].summary()}")
        return result

    def _run_episode(self, method_impl, method: str, episode: Episode, index: int,
                     setting: EpisodeSetting) -> ResultRecord:
        started_at = datetime.now(timezone.utc).isoformat()
        t0 = time.perf_counter()

        adaptation = method_impl.adapt(episode)
        record = evaluate_episode(adaptation.model, episode, method=method,
                                  config_hash=self.config_hash, episode_index=index,
                                  setting=setting)
        record = dataclasses.replace(
            record,
            wall_time=round(time.perf_counter() - t0, 6),
            started_at=started_at,
            finished_at=datetime.now(timezone.utc).isoformat(),
            final_loss=adaptation.final_loss,
        )

        if self.store is not None:
            self.store.append(record)
        logger.debug(str(record))
        return record


@dataclass
class SweepResult:
    """
    Benchmarks over a grid of one parameter ("unlabeled", "shot" or "distractor_classes").

    Attributes:
        parameter: Name of the swept EpisodeSetting field
        values: Grid values, in order
        results: value -> BenchmarkResult
    """
    parameter: str
    values: List[int]
    results: Dict[int, BenchmarkResult] = field(default_factory=dict)

    @property
    def records(self) -> List[ResultRecord]:
        return [r for v in self.values for r in self.results[v].records]

    def trend_table(self) -> pd.DataFrame:
        """One row per (value, method): mean accuracy, ci95, n."""
        rows = []
        for value in self.values:
            for method, agg in self.results[value].aggregates.items():
                rows.append({
                    self.parameter: value,
                    "method": method,
                    "mean_accuracy": agg.mean_accuracy,
                    "ci95": agg.ci95,
                    "n_episodes": agg.n_episodes,
                })
        return pd.DataFrame(rows, columns=[self.parameter, "method", "mean_accuracy",
                                           "ci95", "n_episodes"])


def run_benchmark(
    engine: BenchmarkEngine,
    methods: Sequence[str],
    setting: Optional[EpisodeSetting] = None,
    n_episodes: Optional[int] = None,
    base_seed: Optional[int] = None
) -> BenchmarkResult:
    """Evaluate methods on one setting; see BenchmarkEngine.run."""
    return engine.run(methods, setting, n_episodes=n_episodes, base_seed=base_seed)


def _sweep(engine: BenchmarkEngine, methods: Sequence[str], parameter: str,
           values: Sequence[int], setting: Optional[EpisodeSetting],
           n_episodes: Optional[int]) -> SweepResult:
    setting = setting or engine.default_setting()
    values = [int(v) for v in values]
    if not values:
        raise ConfigurationError(f"{parameter} sweep needs at least one value")

    sweep = SweepResult(parameter=parameter, values=values)
    for value in values:
        cell = dataclasses.replace(setting, **{parameter: value})
        sweep.results[value] = engine.run(methods, cell, n_episodes=n_episodes)
    return sweep


def sweep_unlabeled(
    engine: BenchmarkEngine,
    methods: Sequence[str],
    values: Sequence[int],
    setting: Optional[EpisodeSetting] = None,
    n_episodes: Optional[int] = None
) -> SweepResult:
    """
    Benchmark per U value on paired episodes.

    The unlabeled slice of each class is drawn after support and query, so
    every U value scores the same support and query images.
    """
    return _sweep(engine, methods, "unlabeled", values, setting, n_episodes)


def sweep_shots(
    engine: BenchmarkEngine,
    methods: Sequence[str],
    shots: Sequence[int],
    setting: Optional[EpisodeSetting] = None,
    n_episodes: Optional[int] = None
) -> SweepResult:
    """Benchmark per K value at fixed U."""
    return _sweep(engine, methods, "shot", shots, setting, n_episodes)


def run_distractor_study(
    engine: BenchmarkEngine,
    methods: Sequence[str],
    distractor_counts: Sequence[int],
    setting: Optional[EpisodeSetting] = None,
    n_episodes: Optional[int] = None
) -> SweepResult:
    """Benchmark with unlabeled images from 0..D distractor classes."""
    return _sweep(engine, methods, "distractor_classes", distractor_counts, setting, n_episodes)


def paired_table(records: Sequence[ResultRecord]) -> pd.DataFrame:
    """
    Per-episode accuracies side by side: columns setting, episode_index,
    episode_seed, then one column per method (sorted).
    """
    if not records:
        return pd.DataFrame(columns=["setting", "episode_index", "episode_seed"])

    df = pd.DataFrame([r.to_dict() for r in records])
    table = df.pivot_table(index=["setting", "episode_index", "episode_seed"],
                           columns="method", values="accuracy", aggfunc="first")
    table = table.reindex(sorted(table.columns), axis=1).reset_index()
    table.columns.name = None
    return table.sort_values(["setting", "episode_index"], kind="mergesort").reset_index(drop=True)
