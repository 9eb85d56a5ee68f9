"""Three-class midprice movement labels from k-averaged midprices.

The mean before ``t`` includes ``p[t]``; the mean after starts at ``p[t+1]``.
Sums are accumulated in a fixed order (nearest term first for the past mean,
``t+1`` first for the future mean), both in the scalar helpers and in the
vectorized ``label_series``, so the two agree bit for bit.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from lobcast.errors import ConfigError, OutOfRangeError
from lobcast.lob_data.features import FeatureWindow, gather_windows

DEFAULT_K = 20
DEFAULT_ALPHA = 0.002
DEFAULT_KEEP_FRACTION = 0.33


class MovementLabel(enum.IntEnum):
    DOWN = 0
    STABLE = 1
    UP = 2

    @property
    def class_index(self) -> int:
        return int(self)

    @property
    def display_name(self) -> str:
        return self.name.capitalize()


CLASS_NAMES = tuple(m.display_name for m in MovementLabel)


@dataclass(frozen=True)
class LabelParams:
    k: int = DEFAULT_K
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if int(self.k) != self.k or self.k < 1:
            raise ConfigError(f"k must be a positive integer, got {self.k}")
        if not self.alpha >= 0:
            raise ConfigError(f"alpha must be non-negative, got {self.alpha}")


@dataclass(frozen=True)
class LabeledSample:
    window: FeatureWindow
    label: MovementLabel
    t: int


def avg_mid_before(mids: Sequence[float], t: int, k: int) -> float:
    """Mean of ``mids[t-k+1 .. t]``."""
    if k < 1 or t - k + 1 < 0 or t >= len(mids):
        raise OutOfRangeError(f"need k={k} midprices ending at t={t} (have {len(mids)})")
    acc = float(mids[t])
    for i in range(1, k):
        acc += float(mids[t - i])
    return acc / k


def avg_mid_after(mids: Sequence[float], t: int, k: int) -> float:
    """Mean of ``mids[t+1 .. t+k]``; excludes ``mids[t]``."""
    if k < 1 or t < 0 or t + k >= len(mids):
        raise OutOfRangeError(f"need k={k} midprices after t={t} (have {len(mids)})")
    acc = float(mids[t + 1])
    for i in range(2, k + 1):
        acc += float(mids[t + i])
    return acc / k


def label_at(m_minus: float, m_plus: float, alpha: float) -> MovementLabel:
    # A past mean above the future mean is a downward move.
    if m_minus > m_plus * (1 + alpha):
        return MovementLabel.DOWN
    if m_minus < m_plus * (1 - alpha):
        return MovementLabel.UP
    return MovementLabel.STABLE


def _rolling_means(mids: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Anchors t in [k-1, n-k-1] with their before/after means."""
    n = mids.shape[0]
    t = np.arange(k - 1, n - k)
    if t.size == 0:
        return t, np.empty(0), np.empty(0)
    before = mids[t].copy()
    for i in range(1, k):
        before += mids[t - i]
    after = mids[t + 1].copy()
    for i in range(2, k + 1):
        after += mids[t + i]
    return t, before / k, after / k


def label_array(mids, params: LabelParams = LabelParams()) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized labels: (anchor indices, class indices as int8)."""
    mids = np.asarray(mids, dtype=np.float64)
    t, m_minus, m_plus = _rolling_means(mids, params.k)
    labels = np.full(t.shape, MovementLabel.STABLE, dtype=np.int8)
    down = m_minus > m_plus * (1 + params.alpha)
    up = ~down & (m_minus < m_plus * (1 - params.alpha))
    labels[down] = MovementLabel.DOWN
    labels[up] = MovementLabel.UP
    return t, labels


def label_series(mids, params: LabelParams = LabelParams()) -> list[tuple[int, MovementLabel]]:
    """One label per anchor t in [k-1, len-k-1]; empty when len < 2k."""
    t, labels = label_array(mids, params)
    return [(int(ti), MovementLabel(int(li))) for ti, li in zip(t, labels)]


def stable_keep_mask(labels, keep_fraction: float, seed: int) -> np.ndarray:
    """Boolean keep-mask: Down/Up always kept, Stable kept with ``keep_fraction``.

    One uniform draw per position, so the decision for sample i depends only on
    (seed, i) and not on how many Stable samples precede it.
    """
    if not 0 < keep_fraction <= 1:
        raise ConfigError(f"keep_fraction must be in (0, 1], got {keep_fraction}")
    labels = np.asarray(labels)
    u = np.random.default_rng(seed).random(labels.shape[0])
    return (labels != MovementLabel.STABLE) | (u < keep_fraction)


def downsample_stable(samples: Sequence[LabeledSample], keep_fraction: float,
                      seed: int) -> list[LabeledSample]:
    mask = stable_keep_mask([s.label for s in samples], keep_fraction, seed)
    return [s for s, keep in zip(samples, mask) if keep]


def class_histogram(labels) -> dict[str, int]:
    counts = np.bincount(np.asarray(labels, dtype=np.int64), minlength=3)
    return {name: int(c) for name, c in zip(CLASS_NAMES, counts)}


# -- labeled datasets ----------------------------------------------------------------

MANIFEST_HEADER = "t,end_timestamp_ms,class_index"


@dataclass(frozen=True)
class LabeledDataset:
    """Windowed, labeled samples over normalized feature rows.

    Sample i is the window of ``window_length`` rows ending at row
    ``anchors[i]`` of ``values`` and carries ``labels[i]``. ``t`` is the
    anchor's index in the source snapshot series. Samples are in time order.
    """

    values: np.ndarray
    anchors: np.ndarray
    labels: np.ndarray
    day_ids: np.ndarray
    timestamps_ms: np.ndarray
    t: np.ndarray
    window_length: int

    def __post_init__(self):
        n = self.anchors.shape[0]
        for name in ("labels", "day_ids", "timestamps_ms", "t"):
            if getattr(self, name).shape != (n,):
                raise ValueError(f"{name} must have one entry per sample")
        if n and (self.anchors.min() < self.window_length - 1
                  or self.anchors.max() >= self.values.shape[0]):
            raise ValueError("anchor outside the feature rows")

    def __len__(self) -> int:
        return int(self.anchors.shape[0])

    @property
    def n_features(self) -> int:
        return int(self.values.shape[1])

    def gather(self, idx) -> np.ndarray:
        return gather_windows(self.values, self.anchors[np.asarray(idx)], self.window_length)

    def subset(self, sel) -> "LabeledDataset":
        """Samples picked by a boolean mask or an index array; order preserved for masks."""
        return LabeledDataset(self.values, self.anchors[sel], self.labels[sel],
                              self.day_ids[sel], self.timestamps_ms[sel], self.t[sel],
                              self.window_length)

    def for_days(self, days) -> "LabeledDataset":
        return self.subset(np.isin(self.day_ids, np.asarray(list(days), dtype=np.int64)))

    def unique_days(self) -> list[int]:
        return [int(d) for d in np.unique(self.day_ids)]

    def histogram(self) -> dict[str, int]:
        return class_histogram(self.labels)

    def sample(self, i: int) -> LabeledSample:
        a = int(self.anchors[i])
        window = FeatureWindow(self.values[a - self.window_length + 1:a + 1],
                               int(self.timestamps_ms[i]))
        return LabeledSample(window, MovementLabel(int(self.labels[i])), int(self.t[i]))

    def downsample(self, keep_fraction: float, seed: int) -> "LabeledDataset":
        return self.subset(stable_keep_mask(self.labels, keep_fraction, seed))


def build_labeled_dataset(series, depth: int | None = None, window_length: int = 100,
                          params: LabelParams = LabelParams()) -> LabeledDataset:
    """Truncate, normalize (previous-day stats), window and label a series.

    A sample exists at in-day index t when the window ending at t fits in the
    day (t >= T-1) and the label horizon does too (k-1 <= t <= n-k-1).
    """
    from lobcast.lob_data.book import truncate_depth
    from lobcast.lob_data.features import normalize_series

    if depth is not None:
        series = truncate_depth(series, depth)
    rows = normalize_series(series)
    mids = series.midprices()
    k = params.k
    anchors, labels, days, ts, src = [], [], [], [], []
    for block in rows.days:
        first = int(rows.source_index[block.start])
        day_mids = mids[first:first + len(block)]
        local_t, day_labels = label_array(day_mids, params)
        keep = local_t >= window_length - 1
        local_t, day_labels = local_t[keep], day_labels[keep]
        a = block.start + local_t
        anchors.append(a)
        labels.append(day_labels.astype(np.int64))
        days.append(np.full(a.shape, block.day_id, dtype=np.int64))
        ts.append(rows.timestamps_ms[a])
        src.append(first + local_t)
    cat = lambda parts, dt: np.concatenate(parts).astype(dt) if parts else np.empty(0, dt)  # noqa: E731
    return LabeledDataset(rows.values, cat(anchors, np.int64), cat(labels, np.int64),
                          cat(days, np.int64), cat(ts, np.int64), cat(src, np.int64),
                          int(window_length))


def save_labeled_dataset(ds: LabeledDataset, prefix) -> tuple[str, str]:
    """Write ``<prefix>.csv`` (t, end_timestamp_ms, class_index) and ``<prefix>.npz``.

    The npz holds the normalized rows plus per-sample anchors and day ids, so
    windows can be rebuilt without re-running normalization.
    """
    prefix = str(prefix)
    csv_path, npz_path = prefix + ".csv", prefix + ".npz"
    with open(csv_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(MANIFEST_HEADER + "\n")
        for t, ts, c in zip(ds.t, ds.timestamps_ms, ds.labels):
            fh.write(f"{int(t)},{int(ts)},{int(c)}\n")
    with open(npz_path, "wb") as fh:
        np.savez(fh, values=ds.values, anchors=ds.anchors, labels=ds.labels,
                 day_ids=ds.day_ids, timestamps_ms=ds.timestamps_ms, t=ds.t,
                 window_length=np.int64(ds.window_length))
    return csv_path, npz_path


def load_labeled_dataset(prefix) -> LabeledDataset:
    with np.load(str(prefix) + ".npz") as z:
        return LabeledDataset(z["values"], z["anchors"], z["labels"], z["day_ids"],
                              z["timestamps_ms"], z["t"], int(z["window_length"]))
