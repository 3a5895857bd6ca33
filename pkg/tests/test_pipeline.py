import dataclasses
import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoutstack import netcore
from scoutstack.dataset import Dataset, PositionGroup
from scoutstack.errors import ConfigError, DataError, IneligibleRecordError
from scoutstack.labeling import LABELS, LeagueTier, label_dataset
from scoutstack.netcore import TrainConfig
from scoutstack.pipeline import (
    ALL_POSITIONS,
    PipelineConfig,
    SplitConfig,
    _fit_meta,
    base_outputs,
    evaluate_model,
    fit_stacked,
    fold_assignment,
    load_stacked,
    out_of_fold_base_outputs,
    pipeline_config_from_json,
    predict,
    predict_many,
    save_stacked,
    split_dataset,
    split_indices,
    train_global,
    train_meta,
    train_positional,
)
from scoutstack.synth import SynthConfig, generate

from .conftest import make_record

TIERS = [LeagueTier.SECOND_DIVISION_OR_NONE, LeagueTier.OTHER_FIRST_DIVISION,
         LeagueTier.TOP5_10_EUROPE, LeagueTier.TOP5]

FAST = PipelineConfig(base_hidden=(8,), meta_hidden=(4,), base_train=TrainConfig(epochs=15),
                      meta_train=TrainConfig(epochs=15), folds=3, min_position_records=20)


def class_dataset(counts, position=PositionGroup.DEFENDER):
    recs = []
    for c, n in enumerate(counts):
        for i in range(n):
            recs.append(make_record(f"c{c}-{i}", position, TIERS[c], goals=float(i % 7 + c)))
    return label_dataset(Dataset(tuple(recs)))


def test_split_90_10():
    train, test = split_dataset(class_dataset([40, 30, 20, 10]), SplitConfig(0.9, seed=1))
    assert (len(train), len(test)) == (90, 10)


def test_split_stratified_counts():
    _, test = split_dataset(class_dataset([40, 30, 20, 10]), SplitConfig(0.9, seed=1))
    assert [sum(r.label == lab for r in test.records) for lab in LABELS] == [4, 3, 2, 1]


def test_split_deterministic():
    d = class_dataset([40, 30, 20, 10])
    a = split_dataset(d, SplitConfig(seed=3))
    b = split_dataset(d, SplitConfig(seed=3))
    assert a[0].records == b[0].records
    assert split_dataset(d, SplitConfig(seed=4))[0].records != a[0].records


def test_split_rejects_singleton_class():
    with pytest.raises(DataError, match="0.66"):
        split_dataset(class_dataset([10, 10, 1, 5]))


def test_split_unstratified():
    train, test = split_dataset(class_dataset([40, 30, 20, 10]), SplitConfig(0.9, stratified=False))
    assert (len(train), len(test)) == (90, 10)


def test_split_fraction_bounds():
    with pytest.raises(ConfigError):
        SplitConfig(train_fraction=1.0)


@settings(max_examples=80, deadline=None)
@given(st.lists(st.integers(2, 60), min_size=1, max_size=4), st.floats(0.05, 0.95), st.integers(0, 99))
def test_split_is_partition_with_floor_ceil_counts(sizes, fraction, seed):
    labels = np.concatenate([np.full(n, LABELS[c]) for c, n in enumerate(sizes)])
    labels = labels[np.random.default_rng(seed).permutation(labels.size)]
    tr, te = split_indices(labels, SplitConfig(fraction, seed=seed))
    assert set(tr).isdisjoint(te) and sorted([*tr, *te]) == list(range(labels.size))
    for c, n in enumerate(sizes):
        k = int(np.sum(labels[tr] == LABELS[c]))
        assert k in (int(np.floor(fraction * n)), int(np.ceil(fraction * n)))


def test_folds_two_on_ten_records():
    labels = [0.0] * 6 + [1.0] * 4
    folds = fold_assignment(labels, 2, seed=0)
    assert sorted(np.bincount(folds)) == [5, 5]


def test_folds_exceeding_smallest_class():
    with pytest.raises(DataError):
        fold_assignment([0.0] * 10 + [1.0] * 2, 3, seed=0)


def test_oof_no_leakage_on_40_records():
    d = class_dataset([16, 12, 8, 4])
    oof = out_of_fold_base_outputs(d, 4, dataclasses.replace(FAST, min_position_records=5))
    assert np.all((oof.global_out > 0) & (oof.global_out < 1))
    assert np.all((oof.positional_out > 0) & (oof.positional_out < 1))
    for i in range(len(d)):
        f = oof.fold_of[i]
        assert i not in oof.trained_on[f]
        assert oof.trained_on[f] == frozenset(np.flatnonzero(oof.fold_of != f))


def test_oof_changes_with_fold_assignment():
    d = class_dataset([16, 12, 8, 4])
    a = out_of_fold_base_outputs(d, 4, FAST)
    b = out_of_fold_base_outputs(d, 4, dataclasses.replace(FAST, seed=1))
    moved = a.fold_of != b.fold_of
    assert moved.any()
    assert not np.allclose(a.global_out, b.global_out)


def test_oof_parallel_matches_serial():
    d = class_dataset([16, 12, 8, 4])
    a = out_of_fold_base_outputs(d, 4, FAST)
    b = out_of_fold_base_outputs(d, 4, dataclasses.replace(FAST, jobs=3))
    assert np.array_equal(a.global_out, b.global_out)
    assert np.array_equal(a.positional_out, b.positional_out)


@pytest.fixture(scope="module")
def synth_split():
    d = generate(SynthConfig(n_records=600, seed=2))
    return split_dataset(d, SplitConfig(seed=2))


def test_train_global_separates_classes(synth_split):
    train, test = synth_split
    cfg = dataclasses.replace(FAST, base_hidden=(16,), base_train=TrainConfig(epochs=60))
    model = train_global(train, cfg)
    assert model.train_config["loss"]["class_weights"] is not None
    g, _ = base_outputs(model, {}, test.records, "both", 90.0)
    assert g[test.labels == 1.0].mean() > g[test.labels == 0.0].mean()


def test_train_global_reproducible(synth_split):
    train, _ = synth_split
    a, b = train_global(train, FAST), train_global(train, FAST)
    assert np.array_equal(a.flat, b.flat)


def test_train_global_empty_after_filter():
    d = label_dataset(Dataset((make_record("a", tier=LeagueTier.TOP5, minutes=30.0),)))
    with pytest.raises(DataError):
        train_global(d, FAST)


def test_positional_single_position():
    models = train_positional(class_dataset([20, 10, 10, 5]), FAST)
    assert list(models) == [PositionGroup.DEFENDER]


def test_positional_four_groups(synth_split):
    models = train_positional(synth_split[0], FAST)
    assert set(models) == set(PositionGroup)


def test_positional_skips_small_group(caplog):
    recs = list(class_dataset([30, 20, 10, 10]).records)
    keepers = class_dataset([4, 3, 2, 1], PositionGroup.GOALKEEPER).records
    d = Dataset(tuple(recs) + tuple(dataclasses.replace(r, player_id="gk" + r.player_id) for r in keepers))
    skipped = []
    with caplog.at_level(logging.WARNING):
        models = train_positional(d, dataclasses.replace(FAST, min_position_records=50), skipped=skipped)
    assert PositionGroup.GOALKEEPER not in models and PositionGroup.DEFENDER in models
    assert "Goalkeeper" in caplog.text
    assert skipped == [{"position": "Goalkeeper", "records": 10, "stage": "positional"}]


def test_meta_unweighted_and_two_inputs(synth_split):
    train, _ = synth_split
    oof = out_of_fold_base_outputs(train, 3, FAST)
    meta = train_meta(oof, train.labels, [r.position for r in train.records], FAST)
    assert set(meta) == {ALL_POSITIONS} | {p.value for p in PositionGroup}
    for m in meta.values():
        assert m.spec.layer_sizes[0] == 2
        assert m.train_config["loss"]["class_weights"] is None
    glob = train_meta(oof, train.labels, [r.position for r in train.records],
                      dataclasses.replace(FAST, meta_scope="global"))
    assert set(glob) == {ALL_POSITIONS}


def test_meta_rejects_wrong_input_size():
    with pytest.raises(ConfigError):
        _fit_meta(np.zeros((4, 3)), np.zeros(4), FAST, "x")


@pytest.fixture(scope="module")
def stacked(synth_split):
    return fit_stacked(synth_split[0], FAST)


def test_predict_range_and_determinism(stacked, synth_split):
    _, test = synth_split
    scores = predict_many(stacked, test.records)
    assert np.all((scores > 0) & (scores < 1))
    assert predict(stacked, test.records[0]) == predict(stacked, test.records[0]) == scores[0]


def test_predict_fallback_duplicates_global(stacked, synth_split):
    _, test = synth_split
    reduced = dataclasses.replace(stacked, by_position={
        p: m for p, m in stacked.by_position.items() if p is not PositionGroup.ATTACKER})
    rec = next(r for r in test.records if r.position is PositionGroup.ATTACKER)
    g, p = base_outputs(reduced.global_model, reduced.by_position, [rec], "both", 90.0)
    assert g[0] == p[0]
    expected = netcore.forward(reduced.meta_for(rec.position), [g[0], g[0]])
    assert predict(reduced, rec) == expected


def test_predict_ineligible(stacked):
    rec = make_record("low", minutes=45.0)
    with pytest.raises(IneligibleRecordError):
        predict(stacked, rec)


def test_model_file_round_trip(stacked, synth_split, tmp_path):
    save_stacked(stacked, tmp_path / "m.json")
    back = load_stacked(tmp_path / "m.json")
    recs = synth_split[1].records
    assert np.array_equal(predict_many(back, recs), predict_many(stacked, recs))
    save_stacked(back, tmp_path / "m2.json")
    assert (tmp_path / "m.json").read_bytes() == (tmp_path / "m2.json").read_bytes()


def test_fit_is_byte_reproducible(synth_split, tmp_path):
    cfg = dataclasses.replace(FAST, base_train=TrainConfig(epochs=3), meta_train=TrainConfig(epochs=3))
    save_stacked(fit_stacked(synth_split[0], cfg), tmp_path / "a.json")
    save_stacked(fit_stacked(synth_split[0], cfg), tmp_path / "b.json")
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()


def test_evaluate_model_sections(stacked, synth_split):
    rep = evaluate_model(stacked, synth_split[1])
    assert rep.confusion.total == len(synth_split[1])
    assert set(rep.components) == {"stacked", "global", "positional"}
    assert len(rep.sweep) == 81


def test_config_from_json():
    cfg = pipeline_config_from_json({"folds": 3, "base_train": {"epochs": 7, "loss": {"delta": 0.5}}})
    assert cfg.folds == 3 and cfg.base_train.epochs == 7 and cfg.base_train.loss.delta == 0.5
    with pytest.raises(ConfigError):
        pipeline_config_from_json({"fold": 3})
    with pytest.raises(ConfigError):
        pipeline_config_from_json({"meta_scope": "team"})
