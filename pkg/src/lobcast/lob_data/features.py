"""Normalization and windowing of snapshot series into network inputs.

Feature rows are level-major: for level 1..depth the four columns
``bid_px, bid_vol, ask_px, ask_vol``, so F = 4 * depth.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from lobcast.errors import DegenerateDayError, MissingStatsError
from lobcast.lob_data.book import DayBlock, SnapshotSeries

logger = logging.getLogger(__name__)

DEFAULT_WINDOW = 100
PRICE_COLUMNS = (0, 2)
VOLUME_COLUMNS = (1, 3)


@dataclass(frozen=True)
class NormStats:
    price_mean: float
    price_std: float
    volume_mean: float
    volume_std: float
    source_day: int

    def __post_init__(self):
        if not (self.price_std > 0 and self.volume_std > 0):
            raise DegenerateDayError(
                f"day {self.source_day}: zero standard deviation "
                f"(price_std={self.price_std}, volume_std={self.volume_std})"
            )

    def to_dict(self) -> dict:
        return {"price_mean": self.price_mean, "price_std": self.price_std,
                "volume_mean": self.volume_mean, "volume_std": self.volume_std,
                "source_day": self.source_day}


def compute_norm_stats(series: SnapshotSeries, day: int) -> NormStats:
    """Pooled mean and population std of all prices and all volumes of one day."""
    block = _find_day(series, day)
    if len(block) < 2:
        raise DegenerateDayError(f"day {day} has {len(block)} snapshots; need at least 2")
    sl = slice(block.start, block.end)
    prices = np.concatenate([series.bid_px[sl].ravel(), series.ask_px[sl].ravel()])
    volumes = np.concatenate([series.bid_vol[sl].ravel(), series.ask_vol[sl].ravel()])
    return NormStats(float(prices.mean()), float(prices.std()),
                     float(volumes.mean()), float(volumes.std()), int(day))


def _find_day(series: SnapshotSeries, day: int) -> DayBlock:
    for block in series.days():
        if block.day_id == day:
            return block
    raise KeyError(f"day {day} not in series")


def raw_feature_rows(series: SnapshotSeries) -> np.ndarray:
    """Interleave ladders into (n, 4 * depth) level-major rows, unnormalized."""
    n, d = series.bid_px.shape
    out = np.empty((n, d, 4), dtype=np.float64)
    out[:, :, 0] = series.bid_px
    out[:, :, 1] = series.bid_vol
    out[:, :, 2] = series.ask_px
    out[:, :, 3] = series.ask_vol
    return out.reshape(n, 4 * d)


@dataclass(frozen=True)
class FeatureRows:
    """Normalized rows covering days 2..N of a series.

    ``days`` holds one block per output day, indexing into ``values``.
    ``source_index`` maps each row back to its position in the input series.
    """

    values: np.ndarray
    timestamps_ms: np.ndarray
    days: tuple[DayBlock, ...]
    source_index: np.ndarray

    def __len__(self) -> int:
        return int(self.values.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.values.shape[1])


def normalize(series: SnapshotSeries, stats_by_day: Mapping[int, NormStats]) -> FeatureRows:
    """Standardize each day with the stats of the day before it.

    ``stats_by_day`` is keyed by the day the stats were computed from. The
    first day of the series has no predecessor and is dropped from the output.
    """
    blocks = series.days()
    raw = raw_feature_rows(series)
    pieces, ts, out_days, src = [], [], [], []
    offset = 0
    for prev, block in zip(blocks, blocks[1:]):
        stats = stats_by_day.get(prev.day_id)
        if stats is None:
            raise MissingStatsError(f"no normalization stats for day {prev.day_id} "
                                    f"(needed to normalize day {block.day_id})")
        rows = raw[block.start:block.end].copy()
        _apply(rows, stats)
        pieces.append(rows)
        ts.append(series.timestamps_ms[block.start:block.end])
        src.append(np.arange(block.start, block.end))
        out_days.append(DayBlock(block.day_id, offset, offset + len(block)))
        offset += len(block)
    f = 4 * series.depth
    values = np.concatenate(pieces) if pieces else np.empty((0, f))
    values.setflags(write=False)
    return FeatureRows(
        values=values,
        timestamps_ms=np.concatenate(ts) if ts else np.empty(0, dtype=np.int64),
        days=tuple(out_days),
        source_index=np.concatenate(src) if src else np.empty(0, dtype=np.int64),
    )


def _apply(rows: np.ndarray, stats: NormStats) -> None:
    n = rows.shape[0]
    view = rows.reshape(n, -1, 4)
    for c in PRICE_COLUMNS:
        view[:, :, c] = (view[:, :, c] - stats.price_mean) / stats.price_std
    for c in VOLUME_COLUMNS:
        view[:, :, c] = (view[:, :, c] - stats.volume_mean) / stats.volume_std


def denormalize(rows: np.ndarray, stats: NormStats) -> np.ndarray:
    """Inverse of the standardization applied by ``normalize``."""
    out = np.array(rows, dtype=np.float64, copy=True)
    view = out.reshape(out.shape[0], -1, 4)
    for c in PRICE_COLUMNS:
        view[:, :, c] = view[:, :, c] * stats.price_std + stats.price_mean
    for c in VOLUME_COLUMNS:
        view[:, :, c] = view[:, :, c] * stats.volume_std + stats.volume_mean
    return out


def normalize_series(series: SnapshotSeries) -> FeatureRows:
    """Compute per-day stats and normalize every day after the first."""
    blocks = series.days()
    stats = {b.day_id: compute_norm_stats(series, b.day_id) for b in blocks[:-1]}
    return normalize(series, stats)


@dataclass(frozen=True)
class FeatureWindow:
    values: np.ndarray  # (T, F)
    end_timestamp_ms: int

    def __post_init__(self):
        if self.values.ndim != 2 or self.values.shape[1] % 4:
            raise ValueError(f"window must be (T, 4*depth), got {self.values.shape}")
        if not np.isfinite(self.values).all():
            raise ValueError("window contains non-finite values")


class WindowSet(Sequence[FeatureWindow]):
    """Lazy stride-1 windows over feature rows; no window spans a day boundary.

    ``anchors`` are row indices of each window's last row.
    """

    def __init__(self, rows: FeatureRows, window_length: int, anchors: np.ndarray):
        self.rows = rows
        self.window_length = int(window_length)
        self.anchors = anchors
        self.anchors.setflags(write=False)

    def __len__(self) -> int:
        return int(self.anchors.shape[0])

    def __getitem__(self, i) -> FeatureWindow:
        a = int(self.anchors[i])
        vals = self.rows.values[a - self.window_length + 1:a + 1]
        return FeatureWindow(vals, int(self.rows.timestamps_ms[a]))

    def gather(self, idx) -> np.ndarray:
        """Stack windows ``idx`` (positions into this set) into a (B, T, F) array."""
        return gather_windows(self.rows.values, self.anchors[np.asarray(idx)], self.window_length)


def gather_windows(values: np.ndarray, anchors: np.ndarray, window_length: int) -> np.ndarray:
    offsets = np.arange(-window_length + 1, 1)
    return np.ascontiguousarray(values[anchors[:, None] + offsets[None, :]])


def window_anchors(days: Sequence[DayBlock], window_length: int) -> np.ndarray:
    parts = []
    for block in days:
        if len(block) < window_length:
            logger.info("day %d has %d rows < window %d; no windows", block.day_id,
                        len(block), window_length)
            continue
        parts.append(np.arange(block.start + window_length - 1, block.end))
    return np.concatenate(parts).astype(np.int64) if parts else np.empty(0, dtype=np.int64)


def make_windows(rows: FeatureRows, window_length: int = DEFAULT_WINDOW) -> WindowSet:
    if window_length < 1:
        raise ValueError("window length must be positive")
    return WindowSet(rows, window_length, window_anchors(rows.days, window_length))
