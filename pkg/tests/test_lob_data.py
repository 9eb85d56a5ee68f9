import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from lobcast.errors import (
    DegenerateDayError,
    IngestError,
    InsufficientDepthError,
    MalformedSnapshotError,
    MissingStatsError,
)
from lobcast.labeling import LabelParams, label_array
from lobcast.lob_data import (
    FeatureRows,
    OrderBookSnapshot,
    PriceLevel,
    SnapshotSeries,
    SyntheticConfig,
    compute_norm_stats,
    denormalize,
    generate_synthetic,
    make_windows,
    midprice,
    normalize,
    normalize_series,
    read_snapshot_csv,
    truncate_depth,
    write_snapshot_csv,
)
from lobcast.lob_data.book import MS_PER_DAY, DayBlock
from lobcast.lob_data.features import NormStats, raw_feature_rows
from lobcast.lob_data.io import csv_header, parse_snapshot_csv
from lobcast.lob_data.synthetic import (
    IMBALANCE_THRESHOLD,
    generate_synthetic_with_events,
    top_of_book_imbalance,
)

DAY0 = 1_560_297_600_000


def snap(ts, bid, ask, depth=1, vol=1.0):
    bids = tuple(PriceLevel(bid - 0.5 * i, vol) for i in range(depth))
    asks = tuple(PriceLevel(ask + 0.5 * i, vol) for i in range(depth))
    return OrderBookSnapshot(ts, bids, asks)


def random_series(rng, n_per_day=50, days=2, depth=3, start=DAY0):
    ts = np.concatenate([start + d * MS_PER_DAY + 100 * np.arange(n_per_day) for d in range(days)])
    n = ts.size
    mid = 100 + np.cumsum(rng.normal(0, 0.05, n))
    offs = 0.5 * np.arange(depth)
    bid_px = mid[:, None] - 0.25 - offs
    ask_px = mid[:, None] + 0.25 + offs
    return SnapshotSeries(ts, bid_px, rng.uniform(0.5, 5, (n, depth)), ask_px,
                          rng.uniform(0.5, 5, (n, depth)))


# -- snapshots ------------------------------------------------------------------------

def test_midprice_examples():
    assert midprice(snap(0, 100.3, 100.5)) == pytest.approx(100.4, abs=1e-12)
    assert midprice(snap(0, 9140.25, 9140.75)) == 9140.50


def test_locked_book_rejected():
    with pytest.raises(MalformedSnapshotError):
        snap(0, 100.0, 100.0)


def test_empty_side_rejected():
    with pytest.raises(MalformedSnapshotError):
        OrderBookSnapshot(0, (), (PriceLevel(1.0, 1.0),))


def test_ladder_ordering_enforced():
    with pytest.raises(MalformedSnapshotError):
        OrderBookSnapshot(0, (PriceLevel(99, 1), PriceLevel(99.5, 1)), (PriceLevel(100, 1),))
    with pytest.raises(MalformedSnapshotError):
        OrderBookSnapshot(0, (PriceLevel(99, 1),), (PriceLevel(100, 1), PriceLevel(100, 1)))


@pytest.mark.parametrize("price,volume", [(0.0, 1.0), (-1.0, 1.0), (1.0, -0.1), (math.nan, 1.0)])
def test_price_level_invariants(price, volume):
    with pytest.raises(MalformedSnapshotError):
        PriceLevel(price, volume)


def test_series_roundtrip_from_snapshots():
    snaps = [snap(DAY0 + 100 * i, 100 + i, 101 + i, depth=2) for i in range(5)]
    s = SnapshotSeries.from_snapshots(snaps)
    assert len(s) == 5 and s.depth == 2
    assert list(s) == snaps
    assert s[2] == snaps[2]


def test_series_rejects_gap_within_day():
    snaps = [snap(DAY0, 100, 101), snap(DAY0 + 100, 100, 101), snap(DAY0 + 300, 100, 101)]
    with pytest.raises(IngestError) as exc:
        SnapshotSeries.from_snapshots(snaps)
    assert exc.value.row == 3
    assert str(DAY0 + 300) in str(exc.value)


def test_series_allows_gap_across_days():
    snaps = [snap(DAY0, 100, 101), snap(DAY0 + MS_PER_DAY + 500, 100, 101)]
    s = SnapshotSeries.from_snapshots(snaps)
    assert [b.day_id for b in s.days()] == [DAY0 // MS_PER_DAY, DAY0 // MS_PER_DAY + 1]


def test_series_rejects_unsorted_timestamps():
    with pytest.raises(IngestError):
        SnapshotSeries.from_snapshots([snap(DAY0 + 100, 1, 2), snap(DAY0, 1, 2)])


def test_series_arrays_read_only(rng):
    s = random_series(rng)
    with pytest.raises(ValueError):
        s.bid_px[0, 0] = 1.0


# -- depth ------------------------------------------------------------------------------

def test_truncate_depth_50_to_10(rng):
    s = random_series(rng, n_per_day=20, days=1, depth=50)
    t = truncate_depth(s, 10)
    assert t.depth == 10
    for snapshot in t:
        assert len(snapshot.bids) == 10 and len(snapshot.asks) == 10
    np.testing.assert_array_equal(t.bid_px, s.bid_px[:, :10])


def test_truncate_depth_identity(rng):
    s = random_series(rng, depth=4)
    assert truncate_depth(s, 4) == s


def test_truncate_depth_too_deep(rng):
    s = random_series(rng, n_per_day=5, days=1, depth=50)
    with pytest.raises(InsufficientDepthError) as exc:
        truncate_depth(s, 51)
    assert str(DAY0) in str(exc.value)


# -- normalization -------------------------------------------------------------------------

def test_norm_stats_degenerate_prices():
    # constant prices make a locked book, which validation would reject first
    ts = DAY0 + 100 * np.arange(4)
    const = np.full((4, 1), 100.0)
    s = SnapshotSeries(ts, const, np.arange(1, 5.0)[:, None], const, np.ones((4, 1)), validate=False)
    with pytest.raises(DegenerateDayError):
        compute_norm_stats(s, DAY0 // MS_PER_DAY)


def test_norm_stats_two_point():
    ts = DAY0 + 100 * np.arange(2)
    s = SnapshotSeries(ts, [[99.0], [99.0]], [[1.0], [3.0]], [[101.0], [101.0]], [[1.0], [3.0]])
    st_ = compute_norm_stats(s, DAY0 // MS_PER_DAY)
    assert st_.price_mean == 100.0 and st_.price_std == 1.0
    assert st_.volume_mean == 2.0 and st_.volume_std == 1.0


def test_norm_stats_single_snapshot_rejected():
    s = SnapshotSeries([DAY0], [[99.0]], [[1.0]], [[101.0]], [[2.0]])
    with pytest.raises(DegenerateDayError):
        compute_norm_stats(s, DAY0 // MS_PER_DAY)


def two_pass(values):
    vals = list(values)
    mean = math.fsum(vals) / len(vals)
    var = math.fsum((v - mean) ** 2 for v in vals) / len(vals)
    return mean, math.sqrt(var)


def test_norm_stats_two_pass_oracle(rng):
    s = random_series(rng, n_per_day=1000, days=1, depth=5)
    got = compute_norm_stats(s, DAY0 // MS_PER_DAY)
    pm, ps = two_pass(np.concatenate([s.bid_px.ravel(), s.ask_px.ravel()]))
    vm, vs = two_pass(np.concatenate([s.bid_vol.ravel(), s.ask_vol.ravel()]))
    for a, b in [(got.price_mean, pm), (got.price_std, ps), (got.volume_mean, vm), (got.volume_std, vs)]:
        assert abs(a - b) <= 1e-12 * abs(b)


def test_normalize_uses_previous_day_and_drops_first(rng):
    s = random_series(rng, n_per_day=30, days=3, depth=2)
    rows = normalize_series(s)
    blocks = s.days()
    assert len(rows) == 60
    assert [b.day_id for b in rows.days] == [blocks[1].day_id, blocks[2].day_id]
    st1 = compute_norm_stats(s, blocks[1].day_id)
    raw = raw_feature_rows(s)[blocks[2].start]
    got = rows.values[30]
    assert got[0] == pytest.approx((raw[0] - st1.price_mean) / st1.price_std, rel=1e-14)
    assert got[1] == pytest.approx((raw[1] - st1.volume_mean) / st1.volume_std, rel=1e-14)
    np.testing.assert_array_equal(rows.source_index, np.arange(30, 90))


def test_normalize_centering_and_scaling():
    ts = DAY0 + np.concatenate([100 * np.arange(2), MS_PER_DAY + 100 * np.arange(2)])
    bid = np.array([[99.0], [99.0], [100.0], [101.0]])
    ask = np.array([[101.0], [101.0], [102.0], [103.0]])
    vol = np.array([[1.0], [3.0], [2.0], [3.0]])
    s = SnapshotSeries(ts, bid, vol, ask, vol)
    rows = normalize_series(s).values
    # previous day: price mean 100, std 1; volume mean 2, std 1
    assert rows[0, 0] == 0.0  # bid 100 at the mean
    assert rows[0, 1] == 0.0  # volume 2 at the mean
    assert rows[1, 0] == 1.0  # bid 101 is one std above
    assert rows[1, 3] == 1.0


def test_normalize_missing_stats(rng):
    s = random_series(rng, n_per_day=10, days=2)
    with pytest.raises(MissingStatsError):
        normalize(s, {})


def test_normalize_denormalize_roundtrip(rng):
    s = random_series(rng, n_per_day=200, days=2, depth=4)
    d0 = s.days()[0].day_id
    st_ = compute_norm_stats(s, d0)
    rows = normalize(s, {d0: st_})
    back = denormalize(rows.values, st_)
    raw = raw_feature_rows(s)[rows.source_index]
    assert np.max(np.abs(back - raw) / np.abs(raw)) < 1e-12


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(0.01, 1e6), min_size=8, max_size=8),
       st.floats(1e-3, 1e4), st.floats(1e-3, 1e4), st.floats(-1e4, 1e4), st.floats(-1e4, 1e4))
def test_denormalize_inverse_property(vals, pstd, vstd, pmean, vmean):
    stats = NormStats(pmean, pstd, vmean, vstd, 0)
    rows = np.array(vals).reshape(2, 4)
    z = rows.copy().reshape(2, -1, 4)
    z[:, :, (0, 2)] = (z[:, :, (0, 2)] - pmean) / pstd
    z[:, :, (1, 3)] = (z[:, :, (1, 3)] - vmean) / vstd
    back = denormalize(z.reshape(2, 4), stats)
    np.testing.assert_allclose(back, rows, rtol=1e-9, atol=1e-9 * max(abs(pmean), abs(vmean), 1))


# -- windows -----------------------------------------------------------------------------------

def rows_of(counts, f=4, rng=None):
    rng = rng or np.random.default_rng(0)
    n = sum(counts)
    values = rng.normal(size=(n, f))
    days, start = [], 0
    for i, c in enumerate(counts):
        days.append(DayBlock(i, start, start + c))
        start += c
    return FeatureRows(values, np.arange(n, dtype=np.int64) * 100, tuple(days), np.arange(n))


@pytest.mark.parametrize("counts,expected", [([100], 1), ([105], 6), ([99], 0),
                                             ([105, 50, 120], 6 + 21)])
def test_window_counts(counts, expected):
    assert len(make_windows(rows_of(counts), 100)) == expected


def test_window_contents_are_verbatim_slices():
    rows = rows_of([180, 150])
    ws = make_windows(rows, 100)
    rng = np.random.default_rng(1)
    for i in rng.integers(0, len(ws), 20):
        w = ws[int(i)]
        t = int(ws.anchors[int(i)])
        np.testing.assert_array_equal(w.values, rows.values[t - 99:t + 1])
        assert w.end_timestamp_ms == rows.timestamps_ms[t]
    stacked = ws.gather([0, 5, len(ws) - 1])
    np.testing.assert_array_equal(stacked[1], ws[5].values)


def test_windows_never_cross_days():
    rows = rows_of([130, 130])
    ws = make_windows(rows, 100)
    for a in ws.anchors:
        day = next(b for b in rows.days if b.start <= a < b.end)
        assert a - 99 >= day.start


def test_windows_finite_and_feature_width(rng):
    s = random_series(rng, n_per_day=150, days=2, depth=3)
    ws = make_windows(normalize_series(s), 100)
    for i in range(len(ws)):
        w = ws[i]
        assert np.isfinite(w.values).all() and w.values.shape == (100, 12)


# -- CSV -----------------------------------------------------------------------------------------

def test_csv_roundtrip(tmp_path, rng):
    s = random_series(rng, n_per_day=20, days=2, depth=3)
    p = tmp_path / "s.csv"
    write_snapshot_csv(s, p)
    assert read_snapshot_csv(p) == s
    header = p.read_text().splitlines()[0].split(",")
    assert header == csv_header(3) and len(header) == 13


def test_csv_bad_value_names_row(tmp_path):
    text = ",".join(csv_header(1)) + "\n" + f"{DAY0},99,1,101,1\n{DAY0 + 100},99,abc,101,1\n"
    with pytest.raises(IngestError) as exc:
        parse_snapshot_csv(text)
    assert exc.value.row == 3 and "row 3" in str(exc.value)


def test_csv_wrong_field_count(tmp_path):
    text = ",".join(csv_header(1)) + "\n" + f"{DAY0},99,1,101\n"
    with pytest.raises(IngestError) as exc:
        parse_snapshot_csv(text)
    assert exc.value.row == 2


def test_csv_invariant_violation_row_is_file_line():
    text = (",".join(csv_header(1)) + "\n" + f"{DAY0},99,1,101,1\n{DAY0 + 100},99,1,101,1\n"
            f"{DAY0 + 200},102,1,101,1\n")
    with pytest.raises(IngestError) as exc:
        parse_snapshot_csv(text)
    assert exc.value.row == 4


def test_csv_bad_header():
    with pytest.raises(IngestError):
        parse_snapshot_csv("ts,a,b,c,d\n1,2,3,4,5\n")
    with pytest.raises(IngestError):
        parse_snapshot_csv("")


# -- synthetic --------------------------------------------------------------------------------------

SMALL = SyntheticConfig(days=3, snapshots_per_day=4000, depth=5, seed=7)


def test_synthetic_deterministic():
    a = generate_synthetic(SMALL)
    b = generate_synthetic(SMALL)
    assert a == b
    assert generate_synthetic(SMALL, seed=8) != a


def test_synthetic_shape_and_validity():
    s = generate_synthetic(SMALL)
    assert len(s) == 12000 and s.depth == 5 and len(s.days()) == 3
    s.validate()


@pytest.mark.parametrize("bad", [{"days": 0}, {"snapshots_per_day": -1}, {"depth": 0},
                                 {"signal_strength": 1.5}, {"depth": 51}, {"nope": 1}])
def test_synthetic_config_rejects(bad):
    from lobcast.errors import ConfigError
    with pytest.raises(ConfigError):
        SyntheticConfig.from_dict({**SMALL.to_dict(), **bad})


def test_synthetic_planted_events_follow_imbalance():
    cfg = SyntheticConfig(days=2, snapshots_per_day=20000, depth=4, signal_strength=1.0, seed=3)
    series, events = generate_synthetic_with_events(cfg)
    imb = top_of_book_imbalance(series)
    mids = series.midprices()
    blocks = series.days()
    agree = total = 0
    for ev in events:
        assert ev.planted
        base = blocks[ev.day_index].start
        s0 = base + ev.swell_start
        # threshold crossing at swell onset, then the k-step drift in the imbalance direction
        assert abs(imb[s0]) > IMBALANCE_THRESHOLD
        drift = mids[s0 + cfg.horizon_k + (ev.jump_index - ev.swell_start)] - mids[s0]
        total += 1
        agree += np.sign(drift) == np.sign(imb[s0])
    assert total > 100 and agree / total > 0.99


def test_synthetic_s1_swell_marks_exactly_the_nonstable_labels():
    cfg = SyntheticConfig(days=1, snapshots_per_day=20000, depth=3, signal_strength=1.0, seed=5)
    s = generate_synthetic(cfg)
    t, labels = label_array(s.midprices(), LabelParams(cfg.horizon_k, cfg.alpha))
    imb = top_of_book_imbalance(s)[t]
    predicted = np.where(imb > IMBALANCE_THRESHOLD, 2, np.where(imb < -IMBALANCE_THRESHOLD, 0, 1))
    assert (predicted == labels).all()


def test_synthetic_s0_labels_independent_of_imbalance():
    cfg = SyntheticConfig(days=4, snapshots_per_day=20000, depth=3, signal_strength=0.0, seed=11)
    s = generate_synthetic(cfg)
    t, labels = label_array(s.midprices(), LabelParams(cfg.horizon_k, cfg.alpha))
    imb = top_of_book_imbalance(s)[t]
    swell = np.where(imb > IMBALANCE_THRESHOLD, 2, np.where(imb < -IMBALANCE_THRESHOLD, 0, 1))
    table = np.zeros((2, 3))
    # Stable vs non-stable against the three imbalance states
    np.add.at(table, ((labels != 1).astype(int), swell), 1)
    _, p, _, _ = sps.chi2_contingency(table)
    assert p > 0.01
