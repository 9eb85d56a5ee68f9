import csv
import json

import numpy as np
import pytest

from lobcast.errors import ConfigError, InsufficientDaysError
from lobcast.lob_data import SyntheticConfig, generate_synthetic
from lobcast.tcn.model import TcnConfig
from lobcast.training import TrainConfig
from lobcast.walkforward import (
    ClassificationReport,
    ConfusionMatrix,
    HygieneError,
    WalkForwardConfig,
    format_table,
    make_splits,
    run_walkforward,
    sweep,
)
from lobcast.walkforward import study
from lobcast.walkforward.schema import validate_report
from lobcast.walkforward.study import (
    SWEEP_HEADER,
    check_hygiene,
    labeled_dataset_for,
    prepare_training_sets,
    split_seeds,
)

# -- splits -----------------------------------------------------------------------------------

def test_make_splits_examples():
    days = list(range(100, 108))
    one = make_splits(days, 7)
    assert len(one) == 1 and one[0].train_days == tuple(range(100, 107)) and one[0].test_day == 107
    seven = make_splits(days, 1)
    assert len(seven) == 7
    assert [(s.train_days, s.test_day) for s in seven[:2]] == [((100,), 101), ((101,), 102)]


def test_make_splits_count_and_order():
    for n in range(2, 10):
        for w in range(1, n):
            splits = make_splits(list(range(n)), w)
            assert len(splits) == n - w
            for s in splits:
                assert max(s.train_days) < s.test_day
                assert len(s.train_days) == w


def test_make_splits_insufficient():
    with pytest.raises(InsufficientDaysError) as exc:
        make_splits([1, 2, 3], 3)
    assert "3 usable, 4 required" in str(exc.value)


def test_split_seeds_distinct():
    seeds = {split_seeds(0, i) for i in range(20)}
    assert len(seeds) == 20
    assert split_seeds(5, 2) == split_seeds(5, 2)


def test_config_bounds_and_roundtrip():
    with pytest.raises(ConfigError):
        WalkForwardConfig(train_days=8)
    with pytest.raises(ConfigError):
        WalkForwardConfig(test_days=2)
    with pytest.raises(ConfigError):
        WalkForwardConfig.from_dict({"trian_days": 2})
    cfg = WalkForwardConfig(depth=5, window_length=64, horizon_k=7,
                            tcn=TcnConfig(dilation_levels=6), train=TrainConfig(max_epochs=3))
    back = WalkForwardConfig.from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert back.to_dict() == cfg.to_dict()
    assert back.tcn_config().input_channels == 20


# -- metrics --------------------------------------------------------------------------------------

HAND = [[50, 10, 10], [20, 200, 30], [5, 15, 60]]


def test_hand_metrics():
    r = ClassificationReport.from_confusion(ConfusionMatrix(np.array(HAND)))
    p = [50 / 75, 200 / 225, 60 / 100]
    rc = [50 / 70, 200 / 250, 60 / 80]
    for m, pp, rr in zip(r.per_class, p, rc):
        assert abs(m.precision - pp) < 1e-12
        assert abs(m.recall - rr) < 1e-12
        assert abs(m.f1 - 2 * pp * rr / (pp + rr)) < 1e-12
    assert [m.support for m in r.per_class] == [70, 250, 80]
    assert abs(r.accuracy - 310 / 400) < 1e-12
    assert abs(r.macro.precision - sum(p) / 3) < 1e-12
    assert abs(r.weighted.recall - r.accuracy) < 1e-12
    assert r.support == 400


def test_perfect_predictor():
    y = np.array([0, 1, 1, 2, 2, 2, 1])
    r = ClassificationReport.from_confusion(ConfusionMatrix.from_predictions(y, y))
    assert r.accuracy == 1.0
    assert all(m.precision == m.recall == m.f1 == 1.0 for m in r.per_class)


def test_majority_predictor_zero_division():
    y = np.array([1] * 90 + [0] * 5 + [2] * 5)
    r = ClassificationReport.from_confusion(ConfusionMatrix.from_predictions(y, np.ones_like(y)))
    assert r.accuracy == 0.9
    assert r.per_class[0].precision == 0.0 and r.per_class[0].f1 == 0.0
    assert r.per_class[1].recall == 1.0


def test_pooled_is_sum_of_splits(rng):
    cms = [ConfusionMatrix.from_predictions(rng.integers(0, 3, 50), rng.integers(0, 3, 50))
           for _ in range(4)]
    pooled = sum(cms[1:], cms[0])
    np.testing.assert_array_equal(pooled.counts, sum(c.counts for c in cms))
    assert pooled.total == 200


def test_confusion_validation():
    with pytest.raises(ValueError):
        ConfusionMatrix(np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ConfusionMatrix.from_predictions([0, 1], [0])


def test_reference_table_reconstruction():
    # counts consistent with every rounded value of a full-depth reference results table
    cm = ConfusionMatrix(np.array([[36991, 12075, 12076], [51015, 256912, 42572], [32, 18014, 35713]]))
    table = format_table(ClassificationReport.from_confusion(cm))
    rows = [line.split() for line in table.splitlines()]
    assert rows[0] == ["Class", "Precision", "Recall", "F1", "Accuracy", "Support"]
    assert rows[1][1:5] == ["0.42", "0.61", "0.50", "61%"]
    assert rows[2][1:5] == ["0.90", "0.73", "0.81", "73%"]
    assert rows[3][1:5] == ["0.40", "0.66", "0.50", "66%"]
    assert rows[4] == ["Avg.", "0.78", "0.71", "0.73", "71%", "465400"]


# -- running studies ----------------------------------------------------------------------------

SMALL_TCN = TcnConfig(dilation_levels=4, channels_per_block=4)


def small_config(**kw):
    base = dict(depth=2, window_length=16, horizon_k=10, tcn=SMALL_TCN,
                train=TrainConfig(max_epochs=2, batch_size=64))
    base.update(kw)
    return WalkForwardConfig(**base)


@pytest.fixture(scope="module")
def series():
    return generate_synthetic(SyntheticConfig(days=4, snapshots_per_day=1500, depth=3, seed=8,
                                              horizon_k=10, mean_event_gap=60))


def test_prepare_training_sets_time_ordered(series):
    cfg = small_config()
    data = labeled_dataset_for(series, cfg)
    day = data.unique_days()[0]
    train, val = prepare_training_sets(data, [day], 0.33, 0.1, 4)
    assert len(val) == int(np.ceil((len(train) + len(val)) * 0.1))
    assert train.timestamps_ms.max() < val.timestamps_ms.min()


def test_hygiene_check(series):
    data = labeled_dataset_for(series, small_config())
    d0, d1 = data.unique_days()[:2]
    check_hygiene(data.for_days([d0]), data.for_days([d1]))
    with pytest.raises(HygieneError):
        check_hygiene(data.for_days([d1]), data.for_days([d0]))
    with pytest.raises(HygieneError):
        check_hygiene(data.for_days([d0, d1]), data.for_days([d1]))


@pytest.fixture(scope="module")
def report_dir(series, tmp_path_factory):
    out = tmp_path_factory.mktemp("wf")
    rep = run_walkforward(series, small_config(), out)
    return rep, out


def test_report_structure(report_dir, series):
    rep, out = report_dir
    data = labeled_dataset_for(series, small_config())
    doc = json.loads((out / "report.json").read_text())
    validate_report(doc)
    assert len(rep.splits) == 2 == len(doc["splits"])
    np.testing.assert_array_equal(rep.pooled_confusion.counts,
                                  sum(s.confusion.counts for s in rep.splits))
    for s in rep.splits:
        assert s.confusion.total == len(s.records)
        # the test day is never downsampled: every windowed anchor is scored
        assert s.confusion.total == int((data.day_ids == s.split.test_day).sum())


def test_split_artifacts(report_dir):
    rep, out = report_dir
    for s in rep.splits:
        d = out / f"split_{s.split.index:02d}"
        assert (d / "checkpoint.bin").exists() and (d / "checkpoint.bin.json").exists()
        log = (d / "training_log.jsonl").read_text().splitlines()
        assert len(log) == len(s.fit.history)
        preds = list(csv.reader(open(d / "predictions.csv")))
        assert preds[0] == ["end_timestamp_ms", "true_class", "predicted_class"]
        assert len(preds) - 1 == s.confusion.total
        hourly = list(csv.DictReader(open(d / "hourly.csv")))
        assert sum(int(r["samples"]) for r in hourly) == s.confusion.total
    assert (out / "timings.json").exists()


def test_single_split_pooled_equals_split(series):
    blocks = series.days()
    three_days = series.slice(blocks[0].start, blocks[2].end)
    rep = run_walkforward(three_days, small_config())
    assert len(rep.splits) == 1
    np.testing.assert_array_equal(rep.pooled_confusion.counts, rep.splits[0].confusion.counts)
    assert rep.pooled_report.to_dict() == rep.splits[0].report.to_dict()


def test_insufficient_days(series):
    blocks = series.days()
    two = series.slice(blocks[0].start, blocks[1].end)
    with pytest.raises(InsufficientDaysError):
        run_walkforward(two, small_config(train_days=2))


def test_sweep_rows(series, tmp_path):
    path = tmp_path / "sweep.csv"
    res = sweep(series, "horizon", [5, 10], small_config(train=TrainConfig(max_epochs=1)), path)
    rows = list(csv.reader(open(path)))
    assert rows[0] == SWEEP_HEADER and len(rows) == 3
    assert [int(r[0]) for r in rows[1:]] == [5, 10]
    assert [r["axis_value"] for r in res.rows] == [5, 10]


def test_sweep_interrupt_keeps_completed_rows(series, tmp_path, monkeypatch):
    real = study.run_walkforward
    calls = []

    def flaky(*a, **kw):
        calls.append(1)
        if len(calls) == 2:
            raise KeyboardInterrupt
        return real(*a, **kw)

    monkeypatch.setattr(study, "run_walkforward", flaky)
    path = tmp_path / "sweep.csv"
    with pytest.raises(KeyboardInterrupt):
        sweep(series, "depth", [1, 2, 3], small_config(train=TrainConfig(max_epochs=1)), path)
    rows = list(csv.reader(open(path)))
    assert len(rows) == 2 and rows[1][0] == "1"


def test_sweep_bad_axis(series):
    with pytest.raises(ConfigError):
        sweep(series, "alpha", [1], small_config())
    with pytest.raises(ConfigError):
        sweep(series, "depth", [4], small_config())
