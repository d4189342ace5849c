"""
TransMatch Lab - Command Line

Pre-train a base network, benchmark few-shot methods on sampled episodes,
sweep U / K / distractor classes, and regenerate reports from stored records.

Usage:
    transmatch-lab pretrain --config run.json
    transmatch-lab benchmark --config run.json --methods imprinting,transmatch
    transmatch-lab sweep --config run.json --kind unlabeled
    transmatch-lab report runs/<config_hash>

Exit codes: 0 success, 2 configuration or validation error, 3 runtime error
(including a diverged loss).

Author: Tanam Bam Sinha
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import List, Optional, Sequence, Tuple

import torch
from dotenv import load_dotenv

from transmatch_lab.adapters.factory import make_source
from transmatch_lab.core.checkpoint import Checkpoint
from transmatch_lab.core.errors import (
    CheckpointError,
    ConfigurationError,
    DivergenceError,
    TransMatchError,
)
from transmatch_lab.core.networks import FeatureExtractor
from transmatch_lab.core.pretrain import base_training_set, make_base_head, pretrain
from transmatch_lab.core.sampling import make_split
from transmatch_lab.engine.benchmark import (
    BenchmarkEngine,
    run_benchmark,
    run_distractor_study,
    sweep_shots,
    sweep_unlabeled,
)
from transmatch_lab.engine.comparison import (
    ReportSummary,
    aggregate_records,
    format_aggregate_table,
    write_report,
)
from transmatch_lab.engine.registry import available_methods, validate_methods
from transmatch_lab.engine.results_store import ResultStore, record_files
from transmatch_lab.models.config import RunConfig
from transmatch_lab.models.episode import ClassSplit, ImageDataset

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

OUTPUT_DIR_ENV = "TRANSMATCH_OUTPUT_DIR"
LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"

# --kind -> (sweep function, EvaluationSpec grid field, records stream stem)
SWEEPS = {
    "unlabeled": (sweep_unlabeled, "sweep_unlabeled", "sweep_unlabeled"),
    "shots": (sweep_shots, "sweep_shots", "sweep_shots"),
    "distractors": (run_distractor_study, "sweep_distractors", "distractors"),
}


def load_config(path: Optional[str], episodes: Optional[int] = None) -> RunConfig:
    """
    Read the run config (defaults when no file is given) and apply overrides.

    TRANSMATCH_OUTPUT_DIR replaces output_dir; --episodes replaces
    evaluation.n_episodes.
    """
    config = RunConfig.from_file(Path(path)) if path else RunConfig()

    output_dir = os.getenv(OUTPUT_DIR_ENV)
    if output_dir:
        config = config.with_output_dir(output_dir)
    if episodes is not None:
        try:
            evaluation = dataclasses.replace(config.evaluation, n_episodes=episodes)
        except ConfigurationError as e:
            raise ConfigurationError(f"--episodes: {e}") from e
        config = dataclasses.replace(config, evaluation=evaluation)
    return config


def load_data(config: RunConfig) -> Tuple[ImageDataset, ClassSplit]:
    """Load the dataset and its base / validation / novel class split."""
    source = make_source(config.dataset)
    dataset = source.load()
    split = source.predefined_split()
    if split is None:
        split = make_split(dataset.num_classes, config.split.counts, config.split.seed)
    logger.info(f"Dataset {source.cache_key}: {len(dataset)} images, {dataset.num_classes} "
                f"classes (base {len(split.base_classes)}, validation "
                f"{len(split.validation_classes)}, novel {len(split.novel_classes)})")
    return dataset, split


def checkpoint_path(config: RunConfig) -> Path:
    return Path(config.output_dir) / "checkpoints" / f"pretrain_{config.pretrain_hash()}.pt"


def run_directory(config: RunConfig) -> Path:
    """output_dir/<config_hash>, with the config written alongside the records."""
    run_dir = Path(config.output_dir) / config.config_hash
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.json").write_text(
        json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    return run_dir


def cmd_pretrain(config: RunConfig, force: bool = False) -> Path:
    """
    Pre-train the feature extractor on the base classes.

    The checkpoint is keyed by the pre-training hash; an existing one is reused
    unless force is set. A JSON training log is written next to it.

    Returns:
        Path of the checkpoint
    """
    path = checkpoint_path(config)
    if path.exists() and not force:
        logger.info(f"Reusing checkpoint {path} (pass --force to retrain)")
        return path

    dataset, split = load_data(config)
    base = base_training_set(dataset, split, config.pretrain.use_validation_classes)

    torch.manual_seed(config.pretrain.seed)
    extractor = FeatureExtractor(config.backbone)
    head = make_base_head(extractor, base.num_classes, config.pretrain, seed=config.pretrain.seed)
    result = pretrain(extractor, head, base, config.pretrain, policy=config.augmentation,
                      config_hash=config.pretrain_hash())
    result.checkpoint.save(path)

    log = {
        "config_hash": config.pretrain_hash(),
        "seed": config.pretrain.seed,
        "base_classes": base.num_classes,
        "examples": len(base),
        "initial_loss": result.initial_loss,
        "final_loss": result.final_loss,
        "initial_accuracy": result.initial_accuracy,
        "final_accuracy": result.final_accuracy,
        "loss_trace": [t.loss for t in result.loss_trace],
    }
    path.with_suffix(".log.json").write_text(json.dumps(log, indent=2, sort_keys=True) + "\n",
                                             encoding="utf-8")
    return path


def load_extractor(config: RunConfig) -> FeatureExtractor:
    path = checkpoint_path(config)
    if not path.exists():
        raise CheckpointError(f"No checkpoint for this config at {path}; "
                              "run `transmatch-lab pretrain` first")
    return Checkpoint.load(path).build_extractor()


def _engine(config: RunConfig, store: ResultStore, workers: Optional[int]) -> BenchmarkEngine:
    dataset, split = load_data(config)
    return BenchmarkEngine(dataset, split.novel_classes, load_extractor(config), config,
                           store=store, workers=workers)


def _methods(names: Optional[str], config: RunConfig) -> List[str]:
    if names is None:
        return validate_methods(config.evaluation.methods)
    return validate_methods([n.strip() for n in names.split(",") if n.strip()])


def cmd_benchmark(config: RunConfig, methods: Sequence[str],
                  workers: Optional[int] = None) -> Path:
    """
    Run the configured setting for every method and render the report.

    Returns:
        The run directory holding config.json, benchmark.jsonl and report/
    """
    methods = validate_methods(methods)
    run_dir = run_directory(config)
    store = ResultStore(run_dir / "benchmark.jsonl")
    store.reset()

    engine = _engine(config, store, workers)
    result = run_benchmark(engine, methods)

    print()
    print(format_aggregate_table(aggregate_records(result.records),
                                 title=f"BENCHMARK {result.setting.label}"))
    write_report(run_dir)
    print(f"\nRecords and report written to {run_dir}")
    return run_dir


def cmd_sweep(config: RunConfig, kinds: Sequence[str], methods: Sequence[str],
              workers: Optional[int] = None) -> Path:
    """
    Run one or more sweeps (unlabeled, shots, distractors) over the configured grids.

    Returns:
        The run directory
    """
    methods = validate_methods(methods)
    run_dir = run_directory(config)
    engine = None

    for kind in kinds:
        sweep_fn, grid_field, stem = SWEEPS[kind]
        store = ResultStore(run_dir / f"{stem}.jsonl")
        store.reset()
        if engine is None:
            engine = _engine(config, store, workers)
        engine.store = store

        values = getattr(config.evaluation, grid_field)
        sweep = sweep_fn(engine, methods, values)
        print()
        print(format_aggregate_table(aggregate_records(sweep.records),
                                     title=f"SWEEP {sweep.parameter} = {list(values)}"))

    write_report(run_dir)
    print(f"\nRecords and report written to {run_dir}")
    return run_dir


def cmd_report(results_dir: Path, output_dir: Optional[Path] = None) -> ReportSummary:
    """
    Regenerate tables and plots from the record streams in results_dir.

    Raises:
        ConfigurationError: If the directory holds no readable records
    """
    results_dir = Path(results_dir)
    if not results_dir.is_dir() or not record_files(results_dir):
        raise ConfigurationError(f"No result records (*.jsonl) in {results_dir}")

    report = write_report(results_dir, output_dir)
    if report.records == 0:
        raise ConfigurationError(f"No readable result records in {results_dir} "
                                 f"({report.warnings} corrupted line(s))")

    for table in report.tables:
        print()
        print(table)
    print(f"\nReport: {report.summary()}")
    return report


def _run(args: argparse.Namespace) -> int:
    if args.command == "report":
        cmd_report(Path(args.results_dir), Path(args.output) if args.output else None)
        return EXIT_OK

    config = load_config(args.config, getattr(args, "episodes", None))

    print("\n" + "=" * 80)
    print(f"TRANSMATCH LAB - {args.command.upper()}")
    print("=" * 80)
    print(f"Config hash: {config.config_hash}")
    print(f"Output:      {config.output_dir}")
    print("=" * 80 + "\n")

    if args.command == "pretrain":
        path = cmd_pretrain(config, force=args.force)
        print(f"\nCheckpoint: {path}")
        return EXIT_OK

    methods = _methods(args.methods, config)
    if args.pretrain:
        cmd_pretrain(config, force=args.force)

    if args.command == "benchmark":
        cmd_benchmark(config, methods, workers=args.workers)
    else:
        kinds = list(SWEEPS) if args.kind == "all" else [args.kind]
        cmd_sweep(config, kinds, methods, workers=args.workers)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="transmatch-lab",
        description="TransMatch Lab - semi-supervised few-shot benchmarks"
    )

    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default: INFO)"
    )

    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("pretrain", help="Pre-train the feature extractor on the base classes")
    p.add_argument("--config", type=str, help="JSON run config (default: built-in defaults)")
    p.add_argument("--force", action="store_true", help="Retrain even if a checkpoint exists")

    for name, help_text in (("benchmark", "Benchmark methods on the configured setting"),
                            ("sweep", "Sweep U, K or distractor classes")):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", type=str, help="JSON run config (default: built-in defaults)")
        p.add_argument(
            "--methods",
            type=str,
            help=f"Comma-separated methods (default: from config). "
                 f"Available: {', '.join(available_methods())}"
        )
        p.add_argument("--workers", type=int, help="Worker threads (default: from config)")
        p.add_argument("--episodes", type=int, help="Episodes per cell (default: from config)")
        p.add_argument("--pretrain", action="store_true",
                       help="Pre-train first when no checkpoint exists")
        p.add_argument("--force", action="store_true",
                       help="With --pretrain: retrain even if a checkpoint exists")
        if name == "sweep":
            p.add_argument(
                "--kind",
                choices=sorted(SWEEPS) + ["all"],
                default="all",
                help="Which sweep to run (default: all)"
            )

    p = sub.add_parser("report", help="Regenerate tables and plots from stored records")
    p.add_argument("results_dir", type=str, help="Directory holding *.jsonl record streams")
    p.add_argument("--output", type=str, help="Report directory (default: <results_dir>/report)")

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Entry point of the transmatch-lab console script."""
    parser = build_parser()
    args = parser.parse_args(argv)

    # Load environment variables
    load_dotenv()

    logging.basicConfig(level=getattr(logging, args.log_level), format=LOG_FORMAT)

    try:
        return _run(args)

    except ConfigurationError as e:
        print(f"\nERROR: {e}", file=sys.stderr)
        return EXIT_CONFIG

    except DivergenceError as e:
        print(f"\nDIVERGED: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    except TransMatchError as e:
        print(f"\nERROR: {e}", file=sys.stderr)
        return EXIT_RUNTIME

    except Exception as e:
        logger.exception(f"Unexpected failure: {e}")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
