"""Shared pytest fixtures."""

import numpy as np
import pytest

from sptcl.datamodel import Dataset, Hyperparams, SyntheticSpec, generate_synthetic


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def small_task():
    """A tiny shifted partial task: 4 source classes (2 outliers), 8 features."""
    spec = SyntheticSpec(
        shared_classes=2,
        outlier_classes=2,
        source_per_class=15,
        target_per_class=10,
        n_features=8,
        seed=7,
    )
    return generate_synthetic(spec)


@pytest.fixture
def fast_hp():
    return Hyperparams(outer_iters=4, inner_iters=5)


def _random_task(seed: int, ns: int = 20, nt: int = 15, m: int = 5, classes: int = 3):
    gen = np.random.default_rng(seed)
    source = Dataset(gen.standard_normal((m, ns)), gen.integers(0, classes, size=ns), classes)
    target = Dataset(gen.standard_normal((m, nt)) + 0.5, None, classes)
    return source, target


@pytest.fixture
def make_task():
    """Factory for unstructured random source/target pairs used by oracle-style checks."""
    return _random_task
