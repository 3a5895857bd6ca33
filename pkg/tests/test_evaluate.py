import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scoutstack.errors import ConfigError, DataError
from scoutstack.evaluate import (
    ClassMeans,
    EvaluationReport,
    alpha_grid,
    binarize,
    class_means,
    confusion,
    parse_grid,
    pr_auc,
    quantize_output,
    read_report,
    read_sweep_csv,
    sweep,
    write_report,
    write_sweep_csv,
)
from scoutstack.labeling import LABELS


def counting_oracle(preds, positives, grid):
    """Count flagged and true positives item by item for every alpha."""
    out = []
    n_pos = sum(positives)
    for a in grid:
        flagged = tp = 0
        for p, pos in zip(preds, positives):
            if p > a:
                flagged += 1
                tp += pos
        out.append((float(a), flagged, tp / flagged if flagged else None, tp / n_pos))
    return out


@pytest.mark.parametrize("y,cls", [(1.0, 1.0), (0.4, 0.33), (0.165, 0.0), (0.1651, 0.33),
                                   (0.495, 0.33), (0.83, 0.66), (-3.0, 0.0), (7.0, 1.0)])
def test_quantize(y, cls):
    assert quantize_output(y) == cls


def test_quantize_idempotent_on_classes():
    for lab in LABELS:
        assert quantize_output(quantize_output(lab)) == lab


@given(st.floats(0.495, 10, exclude_min=True))
def test_binary_view_consistent_with_quantization(y):
    assert binarize([quantize_output(y)])[0]


def test_confusion_perfect():
    labels = [0.0, 0.33, 0.66, 1.0, 1.0]
    cm = confusion(labels, labels)
    assert np.array_equal(cm.counts, np.diag([1, 1, 1, 2]))


def test_confusion_corners():
    cm = confusion([0.9, 0.05], [0.0, 1.0])
    expected = np.zeros((4, 4), dtype=int)
    expected[0, 3] = 1
    expected[3, 0] = 1
    assert np.array_equal(cm.counts, expected)


def test_confusion_empty_and_mismatch():
    assert confusion([], []).total == 0
    with pytest.raises(ValueError):
        confusion([0.1], [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.sampled_from(LABELS)), max_size=60))
def test_confusion_sums(pairs):
    preds = [p for p, _ in pairs]
    labels = [y for _, y in pairs]
    cm = confusion(preds, labels)
    assert cm.total == len(pairs)
    for i, lab in enumerate(LABELS):
        assert cm.counts[i].sum() == labels.count(lab)


def test_class_means():
    cm = class_means([0.2, 0.4, 0.9], [0.33, 0.33, 1.0])
    assert cm.means[0.33] == pytest.approx(0.3)
    assert cm.means[1.0] == 0.9
    assert cm.means[0.0] is None and cm.means[0.66] is None
    assert cm.counts == {0.0: 0, 0.33: 2, 0.66: 0, 1.0: 1}


def test_binarize():
    assert binarize([0.66, 0.33, 1.0, 0.0]).tolist() == [True, False, True, False]


def test_sweep_hand_example():
    (p,) = sweep([0.3, 0.2, 0.1, 0.05], [True, False, True, False], [0.15])
    assert (p.flagged, p.precision, p.recall) == (2, 0.5, 0.5)


def test_sweep_extremes():
    preds = [0.3, 0.2, 0.1, 0.05]
    pos = [True, False, True, False]
    low, high = sweep(preds, pos, [0.0, 0.4])
    assert low.recall == 1.0 and low.precision == 0.5
    assert high.flagged == 0 and high.precision is None and high.recall == 0.0


def test_sweep_requires_positives():
    with pytest.raises(DataError):
        sweep([0.2], [False])


def test_sweep_rejects_unsorted_grid():
    with pytest.raises(ConfigError):
        sweep([0.2], [True], [0.3, 0.1])


def test_default_grid():
    g = alpha_grid()
    assert g.size == 81 and g[0] == 0.0 and g[-1] == 0.4 and g[55] == 0.275
    assert np.array_equal(parse_grid("0:0.4:0.005"), g)
    with pytest.raises(ConfigError):
        parse_grid("0-0.4")


@settings(max_examples=100, deadline=None)
@given(st.data())
def test_sweep_matches_oracle_and_is_monotone(data):
    n = data.draw(st.integers(1, 200))
    preds = data.draw(st.lists(st.sampled_from([0.0, 0.05, 0.1, 0.2, 0.275, 0.4]) | st.floats(0, 1),
                               min_size=n, max_size=n))
    positives = data.draw(st.lists(st.booleans(), min_size=n, max_size=n))
    positives[data.draw(st.integers(0, n - 1))] = True
    grid = alpha_grid()
    got = [(p.alpha, p.flagged, p.precision, p.recall) for p in sweep(preds, positives, grid)]
    assert got == counting_oracle(preds, positives, grid)
    flagged = [g[1] for g in got]
    recall = [g[3] for g in got]
    assert flagged == sorted(flagged, reverse=True)
    assert recall == sorted(recall, reverse=True)


def test_pr_auc_perfect_and_reversed():
    assert pr_auc([0.9, 0.8, 0.1, 0.2], [True, True, False, False]) == 1.0
    # positives ranked last: precision 2/4 then ... hand value (1/2)*(1/3)... computed by enumeration
    preds, pos = [0.1, 0.2, 0.8, 0.9], [True, True, False, False]
    # thresholds flag top-k for k=4,3,2,1: recall drops 0.5 at k=4 (precision 0.5) and 0.5 at k=3 (precision 1/3)
    assert pr_auc(preds, pos) == pytest.approx(0.5 * 0.5 + 0.5 * (1 / 3))


def test_pr_auc_ties():
    # all equal scores: single threshold flags everything
    assert pr_auc([0.3] * 4, [True, False, False, False]) == pytest.approx(0.25)


def _report():
    preds = [0.1, 0.35, 0.3, 0.02]
    labels = [0.0, 1.0, 0.66, 0.0]
    return EvaluationReport(
        confusion=confusion(preds, labels),
        class_means=class_means(preds, labels),
        sweep=sweep(preds, binarize(labels)),
        metadata={"model": "m.json", "alpha_grid": "0:0.4:0.005"},
        components={"global": {"pr_auc": 0.5}},
    )


def test_report_round_trip(tmp_path):
    rep = _report()
    write_report(rep, tmp_path / "r.json")
    back = read_report(tmp_path / "r.json")
    assert back.confusion == rep.confusion
    assert back.class_means == rep.class_means
    assert back.sweep == rep.sweep
    assert back.metadata == rep.metadata and back.components == rep.components


def test_absent_precision_is_null(tmp_path):
    rep = _report()
    write_report(rep, tmp_path / "r.json")
    text = (tmp_path / "r.json").read_text()
    assert '"precision": null' in text
    assert read_report(tmp_path / "r.json").sweep[-1].precision is None


def test_sweep_csv(tmp_path):
    rep = _report()
    write_sweep_csv(rep.sweep, tmp_path / "s.csv")
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert lines[0] == "alpha,flagged,precision,recall"
    assert len(lines) - 1 == len(alpha_grid())
    assert read_sweep_csv(tmp_path / "s.csv") == rep.sweep


def test_class_means_json_round_trip():
    cm = class_means([0.5], [1.0])
    assert ClassMeans.from_json(cm.to_json()) == cm
