"""Order book snapshot types.

A ``SnapshotSeries`` keeps the ladders as dense (n, depth) arrays rather than
a list of objects; ``series[i]`` materializes a single ``OrderBookSnapshot``
on demand.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from lobcast.errors import IngestError, InsufficientDepthError, MalformedSnapshotError

logger = logging.getLogger(__name__)

MS_PER_DAY = 86_400_000
DEFAULT_RESOLUTION_MS = 100
MAX_INGEST_DEPTH = 50


@dataclass(frozen=True)
class PriceLevel:
    price: float
    volume: float

    def __post_init__(self):
        if not (np.isfinite(self.price) and self.price > 0):
            raise MalformedSnapshotError(f"price must be positive and finite, got {self.price}")
        if not (np.isfinite(self.volume) and self.volume >= 0):
            raise MalformedSnapshotError(f"volume must be non-negative and finite, got {self.volume}")


@dataclass(frozen=True)
class OrderBookSnapshot:
    """One book observation; ``bids`` best-first descending, ``asks`` best-first ascending."""

    timestamp_ms: int
    bids: tuple[PriceLevel, ...]
    asks: tuple[PriceLevel, ...]

    def __post_init__(self):
        object.__setattr__(self, "bids", tuple(self.bids))
        object.__setattr__(self, "asks", tuple(self.asks))
        if not self.bids or not self.asks:
            raise MalformedSnapshotError(f"snapshot {self.timestamp_ms}: empty bid or ask side")
        bid_px = [lvl.price for lvl in self.bids]
        ask_px = [lvl.price for lvl in self.asks]
        if any(a <= b for a, b in zip(bid_px, bid_px[1:])):
            raise MalformedSnapshotError(f"snapshot {self.timestamp_ms}: bids not strictly descending")
        if any(b <= a for a, b in zip(ask_px, ask_px[1:])):
            raise MalformedSnapshotError(f"snapshot {self.timestamp_ms}: asks not strictly ascending")
        if bid_px[0] >= ask_px[0]:
            raise MalformedSnapshotError(
                f"snapshot {self.timestamp_ms}: crossed or locked book "
                f"(best bid {bid_px[0]} >= best ask {ask_px[0]})"
            )

    @property
    def depth(self) -> int:
        return min(len(self.bids), len(self.asks))


def midprice(snapshot: OrderBookSnapshot) -> float:
    """Mean of the best bid and best ask prices."""
    if not snapshot.bids or not snapshot.asks:
        raise MalformedSnapshotError("empty bid or ask side")
    return (snapshot.asks[0].price + snapshot.bids[0].price) / 2.0


@dataclass(frozen=True)
class DayBlock:
    day_id: int
    start: int
    end: int  # exclusive

    def __len__(self) -> int:
        return self.end - self.start


def _readonly(a, dtype) -> np.ndarray:
    out = np.array(a, dtype=dtype, copy=True, order="C")
    out.setflags(write=False)
    return out


class SnapshotSeries(Sequence[OrderBookSnapshot]):
    """Time-ordered, regular series of snapshots with equal ladder depth.

    Days are UTC calendar days (``timestamp_ms // 86_400_000``). Within a day
    consecutive timestamps must differ by exactly ``resolution_ms``; a gap is
    only allowed across a day boundary.
    """

    def __init__(self, timestamps_ms, bid_px, bid_vol, ask_px, ask_vol,
                 resolution_ms: int = DEFAULT_RESOLUTION_MS, validate: bool = True):
        self.timestamps_ms = _readonly(timestamps_ms, np.int64)
        self.bid_px = _readonly(bid_px, np.float64)
        self.bid_vol = _readonly(bid_vol, np.float64)
        self.ask_px = _readonly(ask_px, np.float64)
        self.ask_vol = _readonly(ask_vol, np.float64)
        self.resolution_ms = int(resolution_ms)
        n = self.timestamps_ms.shape[0]
        for name in ("bid_px", "bid_vol", "ask_px", "ask_vol"):
            arr = getattr(self, name)
            if arr.ndim != 2 or arr.shape[0] != n:
                raise IngestError(f"{name} must have shape (n, depth) with n={n}, got {arr.shape}")
        if self.bid_px.shape != self.ask_px.shape or self.bid_px.shape != self.bid_vol.shape \
                or self.ask_px.shape != self.ask_vol.shape:
            raise IngestError("bid and ask ladders must have equal depth")
        if validate:
            self.validate()

    @classmethod
    def from_snapshots(cls, snapshots: Sequence[OrderBookSnapshot],
                       resolution_ms: int = DEFAULT_RESOLUTION_MS) -> "SnapshotSeries":
        if not snapshots:
            raise IngestError("no snapshots")
        depth = min(s.depth for s in snapshots)
        ts = [s.timestamp_ms for s in snapshots]
        bp = [[lvl.price for lvl in s.bids[:depth]] for s in snapshots]
        bv = [[lvl.volume for lvl in s.bids[:depth]] for s in snapshots]
        ap = [[lvl.price for lvl in s.asks[:depth]] for s in snapshots]
        av = [[lvl.volume for lvl in s.asks[:depth]] for s in snapshots]
        return cls(ts, bp, bv, ap, av, resolution_ms=resolution_ms)

    # -- sequence protocol -------------------------------------------------
    def __len__(self) -> int:
        return int(self.timestamps_ms.shape[0])

    def __getitem__(self, i):
        if isinstance(i, slice):
            return self.slice(*i.indices(len(self))[:2])
        i = range(len(self))[i]
        return OrderBookSnapshot(
            int(self.timestamps_ms[i]),
            tuple(PriceLevel(float(p), float(v)) for p, v in zip(self.bid_px[i], self.bid_vol[i])),
            tuple(PriceLevel(float(p), float(v)) for p, v in zip(self.ask_px[i], self.ask_vol[i])),
        )

    def __iter__(self) -> Iterator[OrderBookSnapshot]:
        for i in range(len(self)):
            yield self[i]

    def __eq__(self, other) -> bool:
        if not isinstance(other, SnapshotSeries):
            return NotImplemented
        return (self.resolution_ms == other.resolution_ms
                and np.array_equal(self.timestamps_ms, other.timestamps_ms)
                and all(np.array_equal(getattr(self, f), getattr(other, f))
                        for f in ("bid_px", "bid_vol", "ask_px", "ask_vol")))

    def __repr__(self) -> str:
        return f"SnapshotSeries(n={len(self)}, depth={self.depth}, days={len(self.days())})"

    @property
    def depth(self) -> int:
        return int(self.bid_px.shape[1])

    def slice(self, start: int, end: int) -> "SnapshotSeries":
        return SnapshotSeries(self.timestamps_ms[start:end], self.bid_px[start:end],
                              self.bid_vol[start:end], self.ask_px[start:end],
                              self.ask_vol[start:end], self.resolution_ms, validate=False)

    def day_ids(self) -> np.ndarray:
        return self.timestamps_ms // MS_PER_DAY

    def days(self) -> list[DayBlock]:
        ids = self.day_ids()
        if ids.size == 0:
            return []
        cuts = np.flatnonzero(np.diff(ids)) + 1
        starts = np.concatenate([[0], cuts])
        ends = np.concatenate([cuts, [ids.size]])
        return [DayBlock(int(ids[s]), int(s), int(e)) for s, e in zip(starts, ends)]

    def day(self, day_id: int) -> "SnapshotSeries":
        for block in self.days():
            if block.day_id == day_id:
                return self.slice(block.start, block.end)
        raise KeyError(f"day {day_id} not in series")

    def midprices(self) -> np.ndarray:
        return (self.ask_px[:, 0] + self.bid_px[:, 0]) / 2.0

    def validate(self) -> None:
        n = len(self)
        if n == 0:
            return
        if self.depth < 1:
            raise IngestError("ladders must have at least one level")
        if self.depth > MAX_INGEST_DEPTH:
            raise IngestError(f"depth {self.depth} exceeds ingest maximum {MAX_INGEST_DEPTH}")
        ts = self.timestamps_ms

        def fail(mask, what):
            i = int(np.flatnonzero(mask)[0])
            raise IngestError(f"{what} at timestamp {int(ts[i])}", row=i + 1)

        for name in ("bid_px", "ask_px"):
            arr = getattr(self, name)
            bad = ~(np.isfinite(arr) & (arr > 0)).all(axis=1)
            if bad.any():
                fail(bad, f"non-positive or non-finite {name}")
        for name in ("bid_vol", "ask_vol"):
            arr = getattr(self, name)
            bad = ~(np.isfinite(arr) & (arr >= 0)).all(axis=1)
            if bad.any():
                fail(bad, f"negative or non-finite {name}")
        if self.depth > 1:
            bad = (np.diff(self.bid_px, axis=1) >= 0).any(axis=1)
            if bad.any():
                fail(bad, "bids not strictly descending")
            bad = (np.diff(self.ask_px, axis=1) <= 0).any(axis=1)
            if bad.any():
                fail(bad, "asks not strictly ascending")
        bad = self.bid_px[:, 0] >= self.ask_px[:, 0]
        if bad.any():
            fail(bad, "best bid >= best ask")
        if n > 1:
            step = np.diff(ts)
            if (step <= 0).any():
                fail(np.concatenate([[False], step <= 0]), "timestamps not strictly increasing")
            same_day = np.diff(ts // MS_PER_DAY) == 0
            gap = same_day & (step != self.resolution_ms)
            if gap.any():
                fail(np.concatenate([[False], gap]),
                     f"irregular spacing (expected {self.resolution_ms} ms)")


def truncate_depth(series: SnapshotSeries, depth: int) -> SnapshotSeries:
    """Keep the best ``depth`` levels on each side."""
    if depth < 1:
        raise ValueError("depth must be positive")
    if depth > series.depth:
        ts = int(series.timestamps_ms[0]) if len(series) else -1
        raise InsufficientDepthError(depth, series.depth, ts)
    if depth == series.depth:
        return series
    return SnapshotSeries(series.timestamps_ms, series.bid_px[:, :depth], series.bid_vol[:, :depth],
                          series.ask_px[:, :depth], series.ask_vol[:, :depth],
                          series.resolution_ms, validate=False)
