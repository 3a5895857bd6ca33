import time

import numpy as np
import pytest

from scoutstack.dataset import STAT_NAMES, PositionGroup, serialize_dataset, validate_dataset
from scoutstack.errors import ConfigError
from scoutstack.features import raw_features
from scoutstack.labeling import LABELS, class_distribution, label_dataset
from scoutstack.synth import SynthConfig, generate, informative_stats


def test_deterministic():
    a = generate(SynthConfig(n_records=1000, seed=11))
    b = generate(SynthConfig(n_records=1000, seed=11))
    assert serialize_dataset(a) == serialize_dataset(b)
    assert serialize_dataset(a) != serialize_dataset(generate(SynthConfig(n_records=1000, seed=12)))


def test_class_mix():
    d = generate(SynthConfig(n_records=1000, class_mix=(0.55, 0.20, 0.15, 0.10), seed=5))
    counts = class_distribution(d).counts
    for lab, target in zip(LABELS, (0.55, 0.20, 0.15, 0.10)):
        assert abs(counts[lab] / 1000 - target) <= 0.03


def test_labels_follow_tiers():
    d = generate(SynthConfig(n_records=200, seed=1))
    relabeled = label_dataset(d)
    assert [r.label for r in relabeled.records] == [r.label for r in d.records]


@pytest.mark.parametrize("seed", [0, 1, 2])
@pytest.mark.parametrize("complementary", [True, False])
def test_records_validate(seed, complementary):
    d = generate(SynthConfig(n_records=2000, seed=seed, complementary_errors=complementary))
    assert validate_dataset(d) == []


def test_bad_configs():
    with pytest.raises(ConfigError):
        SynthConfig(n_records=7)
    with pytest.raises(ConfigError):
        SynthConfig(class_mix=(0.5, 0.5, 0.5, 0.0))
    with pytest.raises(ConfigError):
        SynthConfig(position_mix=(1.0, 0.0, 0.0))
    with pytest.raises(ConfigError):
        SynthConfig(signal_strength=-1)


@pytest.mark.parametrize("complementary", [True, False])
def test_informative_means_increase_across_classes(complementary):
    d = generate(SynthConfig(n_records=20000, seed=3, complementary_errors=complementary))
    for pos in PositionGroup:
        group = [r for r in d.records if r.position is pos]
        per90 = raw_features(group, "per90")
        labels = np.array([r.label for r in group])
        for stat in informative_stats(pos, complementary):
            col = per90[:, STAT_NAMES.index(stat) - 1]
            means = [col[labels == lab].mean() for lab in LABELS]
            assert all(a < b for a, b in zip(means, means[1:])), (pos, stat, means)


def _association(features, labels):
    """Sum over features of |Pearson correlation| with the label."""
    f = (features - features.mean(0)) / (features.std(0) + 1e-12)
    y = (labels - labels.mean()) / labels.std()
    return float(np.abs(f.T @ y / len(y)).sum())


def permutation_p_value(features, labels, n_perm=200, seed=0):
    rng = np.random.default_rng(seed)
    observed = _association(features, labels)
    hits = sum(_association(features, rng.permutation(labels)) >= observed for _ in range(n_perm))
    return (1 + hits) / (1 + n_perm)


def test_no_signal_means_no_association():
    d = generate(SynthConfig(n_records=1500, signal_strength=0.0, seed=8))
    x = raw_features(d.records, "per90")
    assert permutation_p_value(x, d.labels) > 0.01


def test_signal_is_detected_by_same_test():
    d = generate(SynthConfig(n_records=1500, seed=8))
    assert permutation_p_value(raw_features(d.records, "per90"), d.labels) <= 0.01


def test_generation_fast():
    t0 = time.perf_counter()
    generate(SynthConfig(n_records=10_000, seed=0))
    assert time.perf_counter() - t0 < 1.0
