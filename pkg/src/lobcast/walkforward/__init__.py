"""Walk-forward evaluation, classification metrics and hyperparameter sweeps."""
from lobcast.walkforward.metrics import (
    ClassificationReport,
    ClassMetrics,
    ConfusionMatrix,
    format_table,
)
from lobcast.walkforward.study import (
    HygieneError,
    Split,
    SplitResult,
    SweepResult,
    WalkForwardConfig,
    WalkForwardReport,
    evaluate_split,
    make_splits,
    run_walkforward,
    sweep,
)

__all__ = [
    "ClassificationReport", "ClassMetrics", "ConfusionMatrix", "format_table", "HygieneError",
    "Split", "SplitResult", "SweepResult", "WalkForwardConfig", "WalkForwardReport",
    "evaluate_split", "make_splits", "run_walkforward", "sweep",
]
