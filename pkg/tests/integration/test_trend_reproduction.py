"""
Paired-trend reproductions on the default desk-scale configuration.

These pre-train a network and run hundreds of fine-tuned episodes, so they are
skipped unless TRANSMATCH_RUN_TRENDS=1:

    TRANSMATCH_RUN_TRENDS=1 pytest -m trend -s
"""

import dataclasses
import os

import pytest

from transmatch_lab.cli.main import cmd_pretrain, load_data, load_extractor
from transmatch_lab.core.statistics import aggregate
from transmatch_lab.engine.benchmark import (
    BenchmarkEngine,
    run_distractor_study,
    sweep_shots,
    sweep_unlabeled,
)
from transmatch_lab.engine.trends import (
    gap_excludes_zero,
    gap_shrinks,
    gaps_by_value,
    majority_wins,
    no_significant_improvement,
    non_decreasing,
)
from transmatch_lab.models.config import RunConfig

pytestmark = [
    pytest.mark.trend,
    pytest.mark.skipif(os.getenv("TRANSMATCH_RUN_TRENDS") != "1",
                       reason="set TRANSMATCH_RUN_TRENDS=1 to run trend reproductions"),
]


@pytest.fixture(scope="module")
def engine(tmp_path_factory):
    """Default RunConfig, pre-trained once for the module."""
    config = RunConfig().with_output_dir(str(tmp_path_factory.mktemp("trends")))
    cmd_pretrain(config)
    dataset, split = load_data(config)
    return BenchmarkEngine(dataset, split.novel_classes, load_extractor(config), config)


@pytest.fixture(scope="module")
def one_shot(engine):
    """5-way 1-shot, U=30: imprinting, MixMatch, Pseudo-Label and TransMatch on shared episodes."""
    return engine.run(["imprinting", "mixmatch", "pseudo_label", "transmatch"])


def relabel(records, method):
    """Same episodes under another name, so two settings can be paired."""
    return [dataclasses.replace(r, method=method, setting="paired") for r in records]


class TestTrendReproduction:
    """Qualitative findings as paired comparisons."""

    def test_transmatch_beats_imprinting(self, one_shot):
        """Unlabeled data helps: the paired gap CI lies above zero."""
        check = gap_excludes_zero(one_shot.records, "transmatch", "imprinting")
        print(check)
        assert check.passed

    def test_transmatch_beats_random_head_mixmatch(self, one_shot):
        """Imprinting the head before MixMatch helps at 1-shot."""
        check = gap_excludes_zero(one_shot.records, "transmatch", "mixmatch")
        print(check)
        assert check.passed

    def test_augmented_imprinting_not_worse(self, engine):
        """A=10 augmented copies match or beat A=0 on at least 55% of paired episodes."""
        # Arrange: same extractor and episode seeds, only the copy count differs
        config = engine.config
        bare = dataclasses.replace(
            config, imprint=dataclasses.replace(config.imprint, augmentation_copies=0))
        bare_engine = BenchmarkEngine(engine.dataset, engine.novel_classes, engine.extractor, bare)

        # Act
        augmented = engine.run(["imprinting"], n_episodes=100).records
        plain = bare_engine.run(["imprinting"], n_episodes=100).records

        # Assert
        assert [r.episode_seed for r in augmented] == [r.episode_seed for r in plain]
        share = sum(a.accuracy >= p.accuracy for a, p in zip(augmented, plain)) / len(plain)
        print(f"A=10 >= A=0 on {share:.0%} of episodes")
        assert config.imprint.augmentation_copies == 10
        assert share >= 0.55

    def test_imprinting_initialization_matters_most_at_one_shot(self, engine):
        """The TransMatch - MixMatch gap narrows as K grows."""
        sweep = sweep_shots(engine, ["mixmatch", "transmatch"], [1, 3, 5])
        gaps = gaps_by_value({k: sweep.results[k].records for k in sweep.values},
                             "transmatch", "mixmatch")

        check = gap_shrinks(gaps)
        print(check)
        assert check.passed

    def test_more_unlabeled_images_help(self, engine):
        """Accuracy is non-decreasing in U and U=30 beats U=5."""
        sweep = sweep_unlabeled(engine, ["transmatch"], [5, 15, 30])
        aggregates = [aggregate(sweep.results[u].records) for u in sweep.values]

        monotone = non_decreasing(aggregates)
        ends = gap_excludes_zero(relabel(sweep.results[30].records, "u30")
                                 + relabel(sweep.results[5].records, "u5"), "u30", "u5")
        print(monotone)
        print(ends)
        assert monotone.passed
        assert ends.passed

    def test_mixmatch_beats_pseudo_label(self, one_shot):
        """Label guessing with MixUp outperforms hard pseudo-labels."""
        check = gap_excludes_zero(one_shot.records, "transmatch", "pseudo_label")
        print(check)
        assert check.passed

    def test_robust_to_distractor_classes(self, engine):
        """With 1-3 distractor classes TransMatch still wins most episodes."""
        sweep = run_distractor_study(engine, ["imprinting", "transmatch"], [1, 2, 3])

        for value in sweep.values:
            check = majority_wins(sweep.results[value].records, "transmatch", "imprinting",
                                  name=f"transmatch wins majority with {value} distractor(s)")
            print(check)
            assert check.passed

    def test_random_head_mixmatch_flat_across_distractors(self, engine):
        """MixMatch with a random head gains nothing significant from 1 to 3 distractors."""
        sweep = run_distractor_study(engine, ["mixmatch"], [1, 2, 3])
        aggregates = [aggregate(sweep.results[v].records) for v in sweep.values]

        check = no_significant_improvement(aggregates)
        print(check)
        assert check.passed
