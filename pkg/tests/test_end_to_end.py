"""Seeded runs on the default synthetic noisy partial task (6 source classes, 3 shared)."""

import numpy as np
import pytest

from sptcl.datamodel import Dataset, Hyperparams, NoiseSpec, SyntheticSpec, generate_synthetic, inject_label_noise
from sptcl.evaluation import accuracy, baseline_1nn
from sptcl.solver import fit
from sptcl.utils import derive_seed

SEEDS = range(5)
P_NOISE = 0.4

pytestmark = pytest.mark.slow


def run_seed(seed):
    source, target, truth = generate_synthetic(SyntheticSpec(seed=derive_seed(seed, "synthetic")))
    noisy, _ = inject_label_noise(source.labels, source.class_count,
                                  NoiseSpec(p_noise=P_NOISE, seed=derive_seed(seed, "noise")))
    source = Dataset(source.features, noisy, source.class_count)
    result = fit(source, target, Hyperparams(seed=seed), target_truth=truth)
    baseline = accuracy(baseline_1nn(source, target), truth)
    return result, baseline


@pytest.fixture(scope="module")
def runs():
    return [run_seed(seed) for seed in SEEDS]


def test_fixture_size():
    source, target, _ = generate_synthetic(SyntheticSpec())
    assert (source.n_samples, target.n_samples, source.class_count) == (600, 150, 6)


def test_beats_nearest_neighbor_baseline(runs):
    ours = np.mean([result.records[-1].target_accuracy for result, _ in runs])
    baseline = np.mean([baseline for _, baseline in runs])
    assert ours - baseline >= 0.10


def test_final_iteration_is_no_worse_than_first(runs):
    first = np.mean([result.records[0].target_accuracy for result, _ in runs])
    final = np.mean([result.records[-1].target_accuracy for result, _ in runs])
    assert final >= first


def test_confidence_mass_moves_to_top_bin(runs):
    grew = sum(result.records[-1].confidence_histogram[-1] > result.records[0].confidence_histogram[-1]
               for result, _ in runs)
    assert grew >= 4


def test_schedule_reaches_target_only_fit(runs):
    for result, _ in runs:
        counts = [record.selected_count for record in result.records]
        assert counts[0] == 600
        assert counts[-1] == 0
        assert counts == sorted(counts, reverse=True)
