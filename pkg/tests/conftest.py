import numpy as np
import pytest

from mczsl.data import Dataset, Split, SynthConfig, generate_synthetic
from mczsl.numeric import make_rng


@pytest.fixture(scope="session")
def default_dataset():
    return generate_synthetic(SynthConfig(), seed=1)


@pytest.fixture()
def small_dataset():
    cfg = SynthConfig(classes=4, attributes=4, regions=3, feature_dim=5,
                      attr_dim=4, samples_per_class=3, unseen_fraction=0.25,
                      noise=0.1)
    return generate_synthetic(cfg, seed=3)


def build_dataset(num_classes=3, num_attributes=4, regions=3, feature_dim=5,
                  attr_dim=4, samples_per_class=2, n_unseen=1, seed=0) -> Dataset:
    """Hand-rolled dataset for instances the generator's minimums disallow."""
    rng = make_rng(seed)
    c, k = num_classes, num_attributes
    n = c * samples_per_class
    features = rng.standard_normal((n, regions, feature_dim))
    labels = np.repeat(np.arange(c), samples_per_class).astype(np.int64)
    unseen = list(range(c - n_unseen, c))
    seen = list(range(c - n_unseen))
    train_idx, test_seen_idx, test_unseen_idx = [], [], []
    for i in range(n):
        if int(labels[i]) in unseen:
            test_unseen_idx.append(i)
        elif i % samples_per_class == samples_per_class - 1:
            test_seen_idx.append(i)
        else:
            train_idx.append(i)
    return Dataset(
        name="tiny",
        features=features,
        labels=labels,
        attributes=rng.standard_normal((k, attr_dim)),
        class_semantics=rng.random((c, k)),
        split=Split(seen, unseen, train_idx, test_seen_idx, test_unseen_idx),
    )
