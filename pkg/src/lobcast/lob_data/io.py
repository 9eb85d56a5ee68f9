"""Snapshot CSV reader/writer.

Layout: ``timestamp_ms, bid_px_1..bid_px_D, bid_vol_1..bid_vol_D,
ask_px_1..ask_px_D, ask_vol_1..ask_vol_D`` with a header row.
"""
from __future__ import annotations

import csv
import io
import os

import numpy as np

from lobcast.errors import IngestError
from lobcast.lob_data.book import DEFAULT_RESOLUTION_MS, SnapshotSeries


def csv_header(depth: int) -> list[str]:
    cols = ["timestamp_ms"]
    for name in ("bid_px", "bid_vol", "ask_px", "ask_vol"):
        cols += [f"{name}_{i}" for i in range(1, depth + 1)]
    return cols


def write_snapshot_csv(series: SnapshotSeries, path: str | os.PathLike) -> None:
    d = series.depth
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(csv_header(d)) + "\n")
        blocks = np.hstack([series.bid_px, series.bid_vol, series.ask_px, series.ask_vol])
        for ts, row in zip(series.timestamps_ms.tolist(), blocks.tolist()):
            fh.write(str(ts) + "," + ",".join(map(repr, row)) + "\n")


def read_snapshot_csv(path: str | os.PathLike, resolution_ms: int = DEFAULT_RESOLUTION_MS,
                      allow_empty: bool = False) -> SnapshotSeries:
    with open(path, "r", encoding="utf-8", newline="") as fh:
        text = fh.read()
    return parse_snapshot_csv(text, resolution_ms, allow_empty)


def parse_snapshot_csv(text: str, resolution_ms: int = DEFAULT_RESOLUTION_MS,
                       allow_empty: bool = False) -> SnapshotSeries:
    """Parse snapshot CSV text; ``allow_empty`` accepts a header with no data rows."""
    lines = text.splitlines()
    if not lines or not lines[0].strip():
        raise IngestError("empty file or missing header", row=1)
    header = [h.strip() for h in next(csv.reader([lines[0]]))]
    ncols = len(header)
    if ncols < 5 or (ncols - 1) % 4:
        raise IngestError(f"header has {ncols} columns; expected 1 + 4*depth", row=1)
    depth = (ncols - 1) // 4
    if header != csv_header(depth):
        raise IngestError("header does not match the snapshot layout "
                          f"(expected {','.join(csv_header(depth)[:3])},...)", row=1)
    body = [ln for ln in lines[1:] if ln.strip()]
    if not body:
        if allow_empty:
            z = np.empty((0, depth))
            return SnapshotSeries(np.empty(0, dtype=np.int64), z, z, z, z, resolution_ms)
        raise IngestError("no data rows", row=2)
    try:
        data = np.loadtxt(io.StringIO("\n".join(body)), delimiter=",", dtype=np.float64, ndmin=2)
    except ValueError:
        _locate_bad_row(lines, ncols)
        raise
    if data.shape[1] != ncols:
        _locate_bad_row(lines, ncols)
    ts_f = data[:, 0]
    ts = ts_f.astype(np.int64)
    if not np.array_equal(ts.astype(np.float64), ts_f):
        bad = int(np.flatnonzero(ts.astype(np.float64) != ts_f)[0])
        raise IngestError("timestamp_ms is not an integer", row=bad + 2)
    d = depth
    try:
        return SnapshotSeries(ts, data[:, 1:1 + d], data[:, 1 + d:1 + 2 * d],
                              data[:, 1 + 2 * d:1 + 3 * d], data[:, 1 + 3 * d:1 + 4 * d],
                              resolution_ms=resolution_ms)
    except IngestError as exc:
        if exc.row is None:
            raise
        # data row n sits on file line n + 1 (header first)
        raise IngestError(exc.detail, row=exc.row + 1) from None


def _locate_bad_row(lines: list[str], ncols: int) -> None:
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split(",")
        if len(fields) != ncols:
            raise IngestError(f"expected {ncols} fields, found {len(fields)}", row=lineno)
        for f in fields:
            try:
                float(f)
            except ValueError:
                raise IngestError(f"cannot parse value {f.strip()!r}", row=lineno) from None
    raise IngestError("unparseable file")
