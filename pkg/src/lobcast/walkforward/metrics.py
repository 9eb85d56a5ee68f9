"""Confusion matrices and per-class precision / recall / F1 reports."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from lobcast.labeling import CLASS_NAMES

N_CLASSES = 3


@dataclass(frozen=True)
class ConfusionMatrix:
    """Rows are the true class, columns the predicted class."""

    counts: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.counts, dtype=np.int64)
        if c.shape != (N_CLASSES, N_CLASSES) or (c < 0).any():
            raise ValueError("confusion matrix must be 3x3 with non-negative counts")
        c.setflags(write=False)
        object.__setattr__(self, "counts", c)

    @classmethod
    def from_predictions(cls, true, pred) -> "ConfusionMatrix":
        true = np.asarray(true, dtype=np.int64)
        pred = np.asarray(pred, dtype=np.int64)
        if true.shape != pred.shape:
            raise ValueError("true and predicted labels differ in length")
        counts = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
        np.add.at(counts, (true, pred), 1)
        return cls(counts)

    @classmethod
    def zeros(cls) -> "ConfusionMatrix":
        return cls(np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64))

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def to_list(self) -> list[list[int]]:
        return [[int(v) for v in row] for row in self.counts]


@dataclass(frozen=True)
class ClassMetrics:
    precision: float
    recall: float
    f1: float
    support: int

    def to_dict(self) -> dict:
        return {"precision": self.precision, "recall": self.recall, "f1": self.f1,
                "support": self.support}


def _ratio(num: float, den: float) -> float:
    return float(num / den) if den else 0.0


@dataclass(frozen=True)
class ClassificationReport:
    per_class: tuple[ClassMetrics, ...]
    macro: ClassMetrics
    weighted: ClassMetrics
    accuracy: float

    @classmethod
    def from_confusion(cls, cm: ConfusionMatrix) -> "ClassificationReport":
        """Undefined ratios (empty row or column) are reported as 0."""
        c = cm.counts.astype(np.float64)
        tp = np.diag(c)
        support = cm.counts.sum(axis=1)
        predicted = c.sum(axis=0)
        rows = []
        for i in range(N_CLASSES):
            p = _ratio(tp[i], predicted[i])
            r = _ratio(tp[i], support[i])
            rows.append(ClassMetrics(p, r, _ratio(2 * p * r, p + r), int(support[i])))
        total = int(support.sum())
        macro = ClassMetrics(*(float(np.mean([getattr(m, f) for m in rows]))
                               for f in ("precision", "recall", "f1")), total)
        w = support / total if total else np.zeros(N_CLASSES)
        weighted = ClassMetrics(*(float(sum(wi * getattr(m, f) for wi, m in zip(w, rows)))
                                  for f in ("precision", "recall", "f1")), total)
        return cls(tuple(rows), macro, weighted, _ratio(tp.sum(), total))

    @property
    def support(self) -> int:
        return self.weighted.support

    def to_dict(self) -> dict:
        return {
            "per_class": {name: m.to_dict() for name, m in zip(CLASS_NAMES, self.per_class)},
            "macro_avg": self.macro.to_dict(),
            "weighted_avg": self.weighted.to_dict(),
            "accuracy": self.accuracy,
        }


def format_table(report: ClassificationReport) -> str:
    """Aligned text table: one row per class plus a support-weighted "Avg." row.

    The Accuracy column is the per-class recall as a percentage; on the Avg.
    row it is the overall accuracy.
    """
    header = ("Class", "Precision", "Recall", "F1", "Accuracy", "Support")
    body = []
    for name, m in zip(CLASS_NAMES, report.per_class):
        body.append((name, f"{m.precision:.2f}", f"{m.recall:.2f}", f"{m.f1:.2f}",
                     f"{m.recall * 100:.0f}%", str(m.support)))
    w = report.weighted
    body.append(("Avg.", f"{w.precision:.2f}", f"{w.recall:.2f}", f"{w.f1:.2f}",
                 f"{report.accuracy * 100:.0f}%", str(w.support)))
    widths = [max(len(r[i]) for r in [header] + body) for i in range(len(header))]
    lines = []
    for r in [header] + body:
        cells = [r[0].ljust(widths[0])] + [v.rjust(wd) for v, wd in zip(r[1:], widths[1:])]
        lines.append("  ".join(cells).rstrip())
    return "\n".join(lines)
