"""Walk-forward study: train on N consecutive days, test on the next, slide by one day."""
from __future__ import annotations

import csv
import json
import logging
import os
import time
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Sequence

import numpy as np

from lobcast.errors import ConfigError, InputError, InsufficientDaysError, LobcastError
from lobcast.labeling import (
    DEFAULT_ALPHA,
    DEFAULT_K,
    DEFAULT_KEEP_FRACTION,
    LabeledDataset,
    LabelParams,
    build_labeled_dataset,
)
from lobcast.lob_data.book import MAX_INGEST_DEPTH, MS_PER_DAY, SnapshotSeries
from lobcast.tcn.checkpoint import save_checkpoint
from lobcast.tcn.model import TcnConfig, TcnParams, predict_proba
from lobcast.training import FitResult, TrainConfig, fit
from lobcast.walkforward.metrics import ClassificationReport, ConfusionMatrix

logger = logging.getLogger(__name__)

REPORT_FORMAT_VERSION = 1
MAX_TRAIN_DAYS = 7
MS_PER_HOUR = 3_600_000
SWEEP_AXES = ("depth", "train_days", "horizon")
SWEEP_HEADER = ["axis_value", "pooled_accuracy", "recall_down", "recall_stable", "recall_up",
                "splits"]


class HygieneError(LobcastError):
    """A split would let test information leak into training."""


@dataclass(frozen=True)
class WalkForwardConfig:
    train_days: int = 1
    test_days: int = 1
    depth: int = 10
    window_length: int = 100
    horizon_k: int = DEFAULT_K
    alpha: float = DEFAULT_ALPHA
    keep_fraction: float = DEFAULT_KEEP_FRACTION
    tcn: TcnConfig = field(default_factory=TcnConfig)
    train: TrainConfig = field(default_factory=TrainConfig)
    seed: int = 0

    def __post_init__(self):
        if not 1 <= self.train_days <= MAX_TRAIN_DAYS:
            raise ConfigError(f"train_days must be in [1, {MAX_TRAIN_DAYS}], got {self.train_days}")
        if self.test_days != 1:
            raise ConfigError("test_days is fixed at 1")
        if not 1 <= self.depth <= MAX_INGEST_DEPTH:
            raise ConfigError(f"depth must be in [1, {MAX_INGEST_DEPTH}], got {self.depth}")
        if self.window_length < 1:
            raise ConfigError("window_length must be positive")
        if not 0 < self.keep_fraction <= 1:
            raise ConfigError(f"keep_fraction must be in (0, 1], got {self.keep_fraction}")
        LabelParams(self.horizon_k, self.alpha)

    @property
    def label_params(self) -> LabelParams:
        return LabelParams(self.horizon_k, self.alpha)

    def tcn_config(self) -> TcnConfig:
        """Network config with input size and window length tied to depth and T."""
        return replace(self.tcn, input_channels=4 * self.depth, window_length=self.window_length)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["tcn"] = self.tcn_config().to_dict()
        d["train"] = self.train.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WalkForwardConfig":
        d = dict(d)
        known = {f.name for f in fields(cls)}
        bad = set(d) - known
        if bad:
            raise ConfigError(f"unknown walk-forward config keys: {sorted(bad)}")
        try:
            tcn = dict(d.get("tcn", {}))
            tcn["input_channels"] = 4 * int(d.get("depth", cls.depth))
            tcn["window_length"] = int(d.get("window_length", cls.window_length))
            d["tcn"] = TcnConfig.from_dict(tcn)
            if "train" in d:
                d["train"] = TrainConfig.from_dict(d["train"])
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None


@dataclass(frozen=True)
class Split:
    index: int
    train_days: tuple[int, ...]
    test_day: int


def make_splits(day_ids: Sequence[int], train_days: int) -> list[Split]:
    """Split i trains on days [i, i + train_days) and tests on day i + train_days."""
    days = [int(d) for d in day_ids]
    if train_days < 1:
        raise ConfigError("train_days must be >= 1")
    if len(days) < train_days + 1:
        raise InsufficientDaysError(len(days), train_days + 1)
    if any(b <= a for a, b in zip(days, days[1:])):
        raise ConfigError("day ids must be strictly increasing")
    return [Split(i, tuple(days[i:i + train_days]), days[i + train_days])
            for i in range(len(days) - train_days)]


def split_seeds(seed: int, index: int) -> tuple[int, int]:
    """(downsampling seed, training seed) for one split."""
    a, b = np.random.SeedSequence([int(seed), int(index)]).generate_state(2)
    return int(a), int(b)


def prepare_training_sets(data: LabeledDataset, days: Sequence[int], keep_fraction: float,
                          validation_fraction: float, seed: int
                          ) -> tuple[LabeledDataset, LabeledDataset]:
    """Downsample Stable samples of ``days``, then hold out the last fraction in time order."""
    pool = data.for_days(days).downsample(keep_fraction, seed)
    n_val = int(np.ceil(len(pool) * validation_fraction))
    if len(pool) - n_val < 1 or n_val < 1:
        raise InputError(f"days {list(days)} leave {len(pool)} samples after downsampling; "
                         "too few to hold out a validation set")
    return pool.subset(np.arange(len(pool) - n_val)), pool.subset(np.arange(len(pool) - n_val, len(pool)))


def check_hygiene(train: LabeledDataset, test: LabeledDataset) -> None:
    if len(train) and len(test):
        if train.timestamps_ms.max() >= test.timestamps_ms.min():
            raise HygieneError("training samples are not strictly before the test day")
        if np.intersect1d(train.t, test.t).size:
            raise HygieneError("a sample appears in both training and test sets")


@dataclass
class SplitResult:
    split: Split
    confusion: ConfusionMatrix
    report: ClassificationReport
    fit: FitResult
    train_samples: int
    val_samples: int
    train_histogram: dict
    records: np.ndarray  # (n, 3) int64: end timestamp, true class, predicted class
    seconds: float = 0.0

    def hourly(self) -> list[dict]:
        """Per-hour-of-day accuracy on the test day."""
        ts, true, pred = self.records.T
        hours = (ts % MS_PER_DAY) // MS_PER_HOUR
        out = []
        for h in np.unique(hours):
            m = hours == h
            out.append({"hour": int(h), "samples": int(m.sum()),
                        "accuracy": float((true[m] == pred[m]).mean())})
        return out

    def to_dict(self) -> dict:
        return {
            "index": self.split.index,
            "train_days": list(self.split.train_days),
            "test_day": self.split.test_day,
            "train_samples": self.train_samples,
            "val_samples": self.val_samples,
            "test_samples": self.confusion.total,
            "train_class_histogram": self.train_histogram,
            "epochs": len(self.fit.history),
            "best_epoch": self.fit.best_epoch,
            "stop_reason": self.fit.stop_reason,
            "final_lr": self.fit.history[-1].lr_in_effect if self.fit.history else None,
            "confusion_matrix": self.confusion.to_list(),
            "report": self.report.to_dict(),
        }


def evaluate_split(params: TcnParams, test: LabeledDataset, tcn_config: TcnConfig
                   ) -> tuple[ConfusionMatrix, ClassificationReport, np.ndarray]:
    """Predict every (not downsampled) test sample with eval-mode argmax."""
    if len(test) == 0:
        raise LobcastError("empty test set")
    preds = []
    for s in range(0, len(test), 512):
        idx = np.arange(s, min(s + 512, len(test)))
        preds.append(predict_proba(test.gather(idx), params, tcn_config).argmax(axis=1))
    pred = np.concatenate(preds).astype(np.int64)
    cm = ConfusionMatrix.from_predictions(test.labels, pred)
    records = np.stack([test.timestamps_ms, test.labels, pred], axis=1).astype(np.int64)
    return cm, ClassificationReport.from_confusion(cm), records


def run_split(data: LabeledDataset, split: Split, config: WalkForwardConfig) -> SplitResult:
    start = time.perf_counter()
    ds_seed, train_seed = split_seeds(config.seed, split.index)
    train, val = prepare_training_sets(data, split.train_days, config.keep_fraction,
                                       config.train.validation_fraction, ds_seed)
    test = data.for_days([split.test_day])
    check_hygiene(train, test)
    check_hygiene(val, test)
    logger.info("split %d: train days %s (%d + %d val samples), test day %d (%d samples)",
                split.index, list(split.train_days), len(train), len(val), split.test_day,
                len(test))
    tcn_config = config.tcn_config()
    result = fit(train, val, replace(config.train, seed=train_seed), tcn_config)
    cm, report, records = evaluate_split(result.params, test, tcn_config)
    logger.info("split %d: test accuracy %.4f after %d epochs (%s)", split.index,
                report.accuracy, len(result.history), result.stop_reason)
    hist = train.histogram()
    for k, v in val.histogram().items():
        hist[k] += v
    return SplitResult(split, cm, report, result, len(train), len(val), hist, records,
                       time.perf_counter() - start)


@dataclass
class WalkForwardReport:
    config: WalkForwardConfig
    usable_days: list[int]
    splits: list[SplitResult]
    pooled_confusion: ConfusionMatrix
    pooled_report: ClassificationReport

    def to_dict(self) -> dict:
        return {
            "format_version": REPORT_FORMAT_VERSION,
            "config": self.config.to_dict(),
            "usable_days": self.usable_days,
            "splits": [s.to_dict() for s in self.splits],
            "pooled": {"confusion_matrix": self.pooled_confusion.to_list(),
                       "report": self.pooled_report.to_dict()},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def timings(self) -> dict:
        return {"splits": [{"index": s.split.index, "seconds": s.seconds} for s in self.splits],
                "total_seconds": sum(s.seconds for s in self.splits)}


def labeled_dataset_for(series: SnapshotSeries, config: WalkForwardConfig) -> LabeledDataset:
    if config.depth > series.depth:
        raise ConfigError(f"depth {config.depth} exceeds the {series.depth} levels in the data")
    return build_labeled_dataset(series, config.depth, config.window_length, config.label_params)


def run_walkforward(series: SnapshotSeries, config: WalkForwardConfig,
                    out_dir: str | os.PathLike | None = None) -> WalkForwardReport:
    """Train and evaluate every split; optionally persist per-split artifacts.

    With ``out_dir`` set, writes ``report.json`` (deterministic for a given
    config and data), ``timings.json`` (wall clock), and per split a
    checkpoint, the per-epoch training log, per-sample predictions, and
    hourly accuracy buckets.
    """
    if len(series) == 0:
        raise InsufficientDaysError(0, config.train_days + 1)
    data = labeled_dataset_for(series, config)
    days = data.unique_days()
    splits = make_splits(days, config.train_days)
    results = []
    pooled = ConfusionMatrix.zeros()
    for split in splits:
        res = run_split(data, split, config)
        results.append(res)
        pooled = pooled + res.confusion
        if out_dir is not None:
            _write_split(res, config.tcn_config(), os.path.join(os.fspath(out_dir),
                                                                f"split_{split.index:02d}"))
    report = WalkForwardReport(config, days, results, pooled,
                               ClassificationReport.from_confusion(pooled))
    if out_dir is not None:
        write_report(report, out_dir)
    return report


def write_report(report: WalkForwardReport, out_dir) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(os.fspath(out_dir), "report.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(report.to_json())
    with open(os.path.join(os.fspath(out_dir), "timings.json"), "w", encoding="utf-8") as fh:
        json.dump(report.timings(), fh, indent=2)
        fh.write("\n")
    return path


def _write_split(res: SplitResult, tcn_config: TcnConfig, path: str) -> None:
    os.makedirs(path, exist_ok=True)
    save_checkpoint(os.path.join(path, "checkpoint.bin"), res.fit.params, tcn_config)
    with open(os.path.join(path, "training_log.jsonl"), "w", encoding="utf-8") as fh:
        for stats in res.fit.history:
            fh.write(json.dumps(stats.to_dict(), sort_keys=True) + "\n")
    with open(os.path.join(path, "predictions.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["end_timestamp_ms", "true_class", "predicted_class"])
        w.writerows(res.records.tolist())
    with open(os.path.join(path, "hourly.csv"), "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["hour", "samples", "accuracy"])
        for row in res.hourly():
            w.writerow([row["hour"], row["samples"], repr(row["accuracy"])])


# -- sweeps ------------------------------------------------------------------------

@dataclass
class SweepResult:
    axis: str
    values: list[int]
    rows: list[dict]

    def to_dict(self) -> dict:
        return asdict(self)


def sweep_config(axis: str, value, base: WalkForwardConfig) -> WalkForwardConfig:
    if axis not in SWEEP_AXES:
        raise ConfigError(f"unknown sweep axis {axis!r}; choose from {', '.join(SWEEP_AXES)}")
    try:
        value = int(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{axis} values must be integers, got {value!r}") from None
    name = {"depth": "depth", "train_days": "train_days", "horizon": "horizon_k"}[axis]
    return replace(base, **{name: value})


def sweep(series: SnapshotSeries, axis: str, values: Sequence, base: WalkForwardConfig,
          csv_path: str | os.PathLike | None = None) -> SweepResult:
    """One walk-forward run per axis value with everything else (seed included) fixed.

    Rows are appended to ``csv_path`` and flushed as each value completes.
    """
    configs = [sweep_config(axis, v, base) for v in values]
    for cfg in configs:
        if cfg.depth > series.depth:
            raise ConfigError(f"depth {cfg.depth} exceeds the {series.depth} levels in the data")
    fh = writer = None
    if csv_path is not None:
        fh = open(csv_path, "w", encoding="utf-8", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(SWEEP_HEADER)
        fh.flush()
    rows = []
    try:
        for cfg, v in zip(configs, values):
            report = run_walkforward(series, cfg)
            pr = report.pooled_report
            row = {"axis_value": int(v), "pooled_accuracy": pr.accuracy,
                   "recall_down": pr.per_class[0].recall, "recall_stable": pr.per_class[1].recall,
                   "recall_up": pr.per_class[2].recall, "splits": len(report.splits)}
            rows.append(row)
            logger.info("sweep %s=%s: pooled accuracy %.4f", axis, v, pr.accuracy)
            if writer is not None:
                writer.writerow([row[h] if isinstance(row[h], int) else repr(row[h])
                                 for h in SWEEP_HEADER])
                fh.flush()
                os.fsync(fh.fileno())
    finally:
        if fh is not None:
            fh.close()
    return SweepResult(axis, [int(v) for v in values], rows)
