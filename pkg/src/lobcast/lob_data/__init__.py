"""Order book ingest, normalization, windowing and synthetic data."""
from lobcast.lob_data.book import (
    DayBlock,
    OrderBookSnapshot,
    PriceLevel,
    SnapshotSeries,
    midprice,
    truncate_depth,
)
from lobcast.lob_data.features import (
    FeatureRows,
    FeatureWindow,
    NormStats,
    WindowSet,
    compute_norm_stats,
    denormalize,
    make_windows,
    normalize,
    normalize_series,
)
from lobcast.lob_data.io import read_snapshot_csv, write_snapshot_csv
from lobcast.lob_data.synthetic import SyntheticConfig, generate_synthetic

__all__ = [
    "DayBlock", "OrderBookSnapshot", "PriceLevel", "SnapshotSeries", "midprice",
    "truncate_depth", "FeatureRows", "FeatureWindow", "NormStats", "WindowSet",
    "compute_norm_stats", "denormalize", "make_windows", "normalize", "normalize_series",
    "read_snapshot_csv", "write_snapshot_csv", "SyntheticConfig", "generate_synthetic",
]
