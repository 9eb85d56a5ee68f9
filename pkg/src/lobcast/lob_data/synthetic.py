"""Synthetic order book series with a planted, tunable predictive signal.

The midprice is piecewise constant and moves only at event slots spaced at
least ``4 * horizon_k`` snapshots apart. Each event is planted with
probability ``signal_strength``:

* planted: the top ``signal_levels`` bid (or ask) volumes swell, pushing the
  top-of-book imbalance past ``IMBALANCE_THRESHOLD``; within the next
  ``horizon_k`` steps the midprice jumps by ``jump_scale * alpha * price`` in
  the same direction. The swell covers exactly the anchors whose
  (horizon_k, alpha) label is non-stable because of that jump, so with s = 1
  the label is a deterministic function of the visible imbalance.
* unplanted: an equally long decoy swell with a random direction is placed at
  an independent random time, and the slot receives a jump just large enough
  to flip the label of the one anchor preceding it. That anchor's label
  depends only on the next snapshot, so it is unpredictable from anything in
  its window, price history included.

Jump directions revert softly toward ``base_price`` (up-probability
``0.5 - mean_reversion * (price / base_price - 1)``, clipped to [0.1, 0.9]) so
the price stays within a few percent of its base and test days do not drift
outside the range seen in training. Event timing and swells never depend on
the price. With s = 0 whether an anchor is Stable is independent of every
feature, so the Bayes classifier always predicts Stable; the Bayes accuracy
rises monotonically with s as more non-stable anchors become visible.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields

import numpy as np

from lobcast.errors import ConfigError
from lobcast.lob_data.book import DEFAULT_RESOLUTION_MS, MS_PER_DAY, SnapshotSeries

IMBALANCE_THRESHOLD = 0.6
BACKGROUND_VOLUME = (1.0, 3.0)
SWELL_VOLUME = (15.0, 20.0)
START_TIMESTAMP_MS = 1_560_297_600_000  # 2019-06-12T00:00:00Z


@dataclass(frozen=True)
class SyntheticConfig:
    days: int = 4
    snapshots_per_day: int = 20_000
    depth: int = 10
    signal_strength: float = 1.0
    seed: int = 0
    horizon_k: int = 20
    alpha: float = 0.002
    signal_levels: int = 1
    mean_event_gap: int = 120
    jump_scale: float = 3.0
    mean_reversion: float = 15.0
    base_price: float = 9000.0
    spread: float = 0.5
    level_spacing: float = 0.5
    start_timestamp_ms: int = START_TIMESTAMP_MS
    resolution_ms: int = DEFAULT_RESOLUTION_MS

    def __post_init__(self):
        for name in ("days", "snapshots_per_day", "depth", "horizon_k", "signal_levels",
                     "mean_event_gap", "resolution_ms"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ConfigError(f"{name} must be a positive integer, got {v}")
        if not 0.0 <= self.signal_strength <= 1.0:
            raise ConfigError(f"signal_strength must be in [0, 1], got {self.signal_strength}")
        if self.signal_levels > self.depth:
            raise ConfigError("signal_levels cannot exceed depth")
        if self.depth > 50:
            raise ConfigError("depth must be <= 50")
        if not (self.alpha > 0 and self.jump_scale > 1 and self.base_price > 0
                and self.spread > 0 and self.level_spacing > 0):
            raise ConfigError("alpha, spread, level_spacing, base_price must be positive "
                              "and jump_scale > 1")
        if self.mean_reversion < 0:
            raise ConfigError("mean_reversion must be non-negative")
        if self.snapshots_per_day * self.resolution_ms > MS_PER_DAY:
            raise ConfigError("snapshots_per_day * resolution_ms exceeds one day")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown synthetic config keys: {sorted(unknown)}")
        try:
            return cls(**d)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    @classmethod
    def from_json(cls, text: str) -> "SyntheticConfig":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc}") from None
        if not isinstance(d, dict):
            raise ConfigError("synthetic config must be a JSON object")
        return cls.from_dict(d)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SyntheticEvent:
    day_index: int
    jump_index: int  # in-day index t0; the price changes between t0 and t0 + 1
    direction: int  # +1 up, -1 down
    planted: bool
    swell_start: int  # in-day index range [start, end) of the imbalance swell
    swell_end: int
    swell_direction: int


def isolated_jump_size(price: float, k: int, alpha: float, direction: int) -> float:
    """Jump that makes only the anchor just before it non-stable.

    Returns the midpoint of the open interval of sizes for which the anchor at
    the jump crosses the alpha band while the anchors on either side do not.
    """
    a, P = alpha, price
    if direction > 0:
        lo = a * P / (1 - a)
        if k == 1:
            return 2 * lo
        hi = min(a * P / (1 - 1 / k - a), a * P * k / ((k - 1) * (1 - a)))
    else:
        lo = a * P / (1 + a)
        if k == 1:
            return 2 * lo
        hi = min(a * P / (1 + a - 1 / k), a * P * k / ((k - 1) * (1 + a)))
    return 0.5 * (lo + hi)


def _event_slots(n: int, k: int, mean_gap: int, rng: np.random.Generator) -> list[int]:
    min_gap = 4 * k
    extra = max(mean_gap - min_gap, 0)
    slots = []
    t = 2 * k + int(rng.integers(0, min_gap))
    while t <= n - 2 * k - 1:
        slots.append(t)
        t += min_gap + (int(rng.geometric(1.0 / (extra + 1))) - 1 if extra else 0)
    return slots


def _nonstable_run(mids: np.ndarray, t0: int, k: int, alpha: float) -> tuple[int, int]:
    """Contiguous range of anchors around t0 labeled non-stable (local labeling)."""
    from lobcast.labeling import LabelParams, label_array

    lo = max(t0 - 2 * k, 0)
    hi = min(t0 + 2 * k + 1, mids.shape[0])
    t, labels = label_array(mids[lo:hi], LabelParams(k, alpha))
    t = t + lo
    nonstable = {int(a) for a, b in zip(t, labels) if b != 1}
    if t0 not in nonstable:
        return t0, t0
    start = t0
    while start - 1 in nonstable:
        start -= 1
    end = t0 + 1
    while end in nonstable:
        end += 1
    return start, end


def generate_synthetic_with_events(config: SyntheticConfig, seed: int | None = None
                                   ) -> tuple[SnapshotSeries, list[SyntheticEvent]]:
    seed = config.seed if seed is None else seed
    rng = np.random.default_rng(seed)
    n, D, k = config.snapshots_per_day, config.depth, config.horizon_k
    price = config.base_price
    mids_all, vols_bid, vols_ask, ts_all = [], [], [], []
    events: list[SyntheticEvent] = []
    lo_v, hi_v = BACKGROUND_VOLUME

    for day in range(config.days):
        mids = np.empty(n)
        slots = _event_slots(n, k, config.mean_event_gap, rng)
        planned = []
        cursor = 0
        for t0 in slots:
            mids[cursor:t0 + 1] = price
            p_up = min(max(0.5 - config.mean_reversion * (price / config.base_price - 1.0), 0.1), 0.9)
            direction = 1 if rng.random() < p_up else -1
            planted = bool(rng.random() < config.signal_strength)
            if planted:
                jump = config.jump_scale * config.alpha * price
            else:
                jump = isolated_jump_size(price, k, config.alpha, direction)
            price = round(price + direction * jump, 2)
            cursor = t0 + 1
            planned.append((t0, direction, planted))
        mids[cursor:] = price

        bid_vol = np.round(rng.uniform(lo_v, hi_v, size=(n, D)), 4)
        ask_vol = np.round(rng.uniform(lo_v, hi_v, size=(n, D)), 4)
        occupied = np.zeros(n, dtype=bool)
        swells = []
        for t0, direction, planted in planned:
            if planted:
                start, end = _nonstable_run(mids, t0, k, config.alpha)
                swells.append((start, end, direction))
                occupied[max(start - 1, 0):end + 1] = True
        width = _typical_run_width(config, k)
        for t0, direction, planted in planned:
            if planted:
                events.append(SyntheticEvent(day, t0, direction, True, *swells.pop(0)))
                continue
            swell_dir = 1 if rng.random() < 0.5 else -1
            start = end = t0
            if width and n > width:
                for _ in range(50):
                    s = int(rng.integers(0, n - width))
                    if not occupied[max(s - 1, 0):s + width + 1].any():
                        start, end = s, s + width
                        occupied[max(start - 1, 0):end + 1] = True
                        break
            events.append(SyntheticEvent(day, t0, direction, False, start, end, swell_dir))
        for ev in events:
            if ev.day_index != day or ev.swell_end <= ev.swell_start:
                continue
            L, S = config.signal_levels, slice(ev.swell_start, ev.swell_end)
            target = bid_vol if ev.swell_direction > 0 else ask_vol
            target[S, :L] = np.round(rng.uniform(*SWELL_VOLUME, size=(ev.swell_end - ev.swell_start, L)), 4)

        ts = (config.start_timestamp_ms + day * MS_PER_DAY
              + np.arange(n, dtype=np.int64) * config.resolution_ms)
        mids_all.append(mids)
        vols_bid.append(bid_vol)
        vols_ask.append(ask_vol)
        ts_all.append(ts)

    mids = np.concatenate(mids_all)
    half = config.spread / 2
    offs = np.arange(D) * config.level_spacing
    bid_px = np.round(mids[:, None] - half - offs[None, :], 2)
    ask_px = np.round(mids[:, None] + half + offs[None, :], 2)
    series = SnapshotSeries(np.concatenate(ts_all), bid_px, np.concatenate(vols_bid),
                            ask_px, np.concatenate(vols_ask), config.resolution_ms)
    return series, events


def _typical_run_width(config: SyntheticConfig, k: int) -> int:
    """Width of the non-stable run a planted jump produces (decoys copy it)."""
    probe = np.full(6 * k + 2, config.base_price)
    t0 = 3 * k
    probe[t0 + 1:] = round(config.base_price * (1 + config.jump_scale * config.alpha), 2)
    start, end = _nonstable_run(probe, t0, k, config.alpha)
    return end - start


def generate_synthetic(config: SyntheticConfig, seed: int | None = None) -> SnapshotSeries:
    """Deterministic in (config, seed); ``seed`` defaults to ``config.seed``."""
    return generate_synthetic_with_events(config, seed)[0]


def top_of_book_imbalance(series: SnapshotSeries) -> np.ndarray:
    b, a = series.bid_vol[:, 0], series.ask_vol[:, 0]
    return (b - a) / (b + a)
