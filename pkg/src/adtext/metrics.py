"""Confusion matrix, accuracy, precision/recall/F1 and support-weighted averages.

Per-class counts come from the matrix (rows = true class, columns = predicted):
TP_c is the diagonal cell, FP_c the rest of column c, FN_c the rest of row c,
TN_c everything else. A ratio whose denominator is zero is reported as 0 and
flagged in ``ClassReport.warnings``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .errors import InputError


class UndefinedMetricError(InputError):
    pass


@dataclass(frozen=True)
class ConfusionMatrix:
    counts: np.ndarray
    class_names: tuple[str, ...] = ()

    def __post_init__(self):
        if not self.class_names:
            object.__setattr__(self, "class_names", tuple(str(i) for i in range(self.num_classes)))

    @property
    def num_classes(self) -> int:
        return self.counts.shape[0]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def support(self) -> np.ndarray:
        return self.counts.sum(axis=1)

    def tp(self, c: int) -> int:
        return int(self.counts[c, c])

    def fp(self, c: int) -> int:
        return int(self.counts[:, c].sum()) - self.tp(c)

    def fn(self, c: int) -> int:
        return int(self.counts[c, :].sum()) - self.tp(c)

    def tn(self, c: int) -> int:
        return self.total - self.tp(c) - self.fp(c) - self.fn(c)

    def to_csv(self) -> str:
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(self.class_names)
        writer.writerows(self.counts.tolist())
        return out.getvalue()

    @classmethod
    def from_csv(cls, text: str) -> "ConfusionMatrix":
        rows = list(csv.reader(io.StringIO(text)))
        if not rows:
            raise InputError("empty confusion matrix CSV")
        names = tuple(rows[0])
        try:
            counts = np.array([[int(v) for v in r] for r in rows[1:] if r], dtype=np.int64)
        except ValueError as exc:
            raise InputError(f"bad confusion matrix cell: {exc}") from None
        if counts.shape != (len(names), len(names)):
            raise InputError(f"confusion matrix is {counts.shape}, header names {len(names)} classes")
        return cls(counts, names)


@dataclass(frozen=True)
class ClassRow:
    precision: float
    recall: float
    f1: float
    support: int


@dataclass
class ClassReport:
    rows: list[ClassRow]
    accuracy: float
    weighted: tuple[float, float, float]
    total: int
    class_names: tuple[str, ...] = ()
    warnings: list[str] = field(default_factory=list)


def confusion(
    true_labels: Sequence[int], predicted_labels: Sequence[int], num_classes: int,
    class_names: Sequence[str] = (),
) -> ConfusionMatrix:
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(predicted_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise InputError(f"label sequences differ in length ({t.size} vs {p.size})")
    if t.size and (min(t.min(), p.min()) < 0 or max(t.max(), p.max()) >= num_classes):
        raise InputError(f"label outside [0, {num_classes})")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts, tuple(class_names))


def accuracy(cm: ConfusionMatrix) -> float:
    total = cm.total
    if total == 0:
        raise UndefinedMetricError("accuracy of an empty confusion matrix")
    return float(np.trace(cm.counts)) / total


def _ratio(num: int, den: int) -> float:
    return num / den if den else 0.0


def harmonic_f1(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def precision_recall_f1(cm: ConfusionMatrix, c: int) -> tuple[float, float, float]:
    if not 0 <= c < cm.num_classes:
        raise InputError(f"class id {c} outside [0, {cm.num_classes})")
    tp = cm.tp(c)
    precision = _ratio(tp, tp + cm.fp(c))
    recall = _ratio(tp, tp + cm.fn(c))
    return precision, recall, harmonic_f1(precision, recall)


def weighted_average(rows: Sequence[tuple[float, float, float, int]]) -> tuple[float, float, float]:
    """Average precision, recall and F1 with weights support_c / total_support."""
    arr = np.array([r[:3] for r in rows], dtype=np.float64).reshape(-1, 3)
    support = np.array([r[3] for r in rows], dtype=np.float64)
    if (support < 0).any():
        raise InputError("negative support")
    total = support.sum()
    if total <= 0:
        raise UndefinedMetricError("weighted average with zero total support")
    avg = (arr * (support / total)[:, None]).sum(axis=0)
    return float(avg[0]), float(avg[1]), float(avg[2])


def build_report(cm: ConfusionMatrix) -> ClassReport:
    rows = []
    warnings = []
    for c in range(cm.num_classes):
        p, r, f = precision_recall_f1(cm, c)
        tp = cm.tp(c)
        if tp + cm.fp(c) == 0:
            warnings.append(f"class {c}: precision undefined (no predictions), set to 0")
        if tp + cm.fn(c) == 0:
            warnings.append(f"class {c}: recall undefined (no true examples), set to 0")
        rows.append(ClassRow(p, r, f, int(cm.support()[c])))
    weighted = weighted_average([(r.precision, r.recall, r.f1, r.support) for r in rows])
    return ClassReport(rows, accuracy(cm), weighted, cm.total, cm.class_names, warnings)


HEADER = ("id", "precision", "recall", "f1-score", "support")


def _table(report: ClassReport) -> list[tuple[str, str, str, str, str]]:
    """Table rows as strings: one per class, then accuracy and weighted average."""
    lines = [(str(i), f"{r.precision:.2f}", f"{r.recall:.2f}", f"{r.f1:.2f}", str(r.support))
             for i, r in enumerate(report.rows)]
    wp, wr, wf = report.weighted
    lines.append(("accuracy", "", "", f"{report.accuracy:.2f}", str(report.total)))
    lines.append(("weighted avg", f"{wp:.2f}", f"{wr:.2f}", f"{wf:.2f}", str(report.total)))
    return lines


def render_report(report: ClassReport, format: str = "text") -> str:
    rows = _table(report)
    if format == "csv":
        out = io.StringIO()
        writer = csv.writer(out, lineterminator="\n")
        writer.writerow(HEADER)
        writer.writerows(rows)
        return out.getvalue()
    if format == "markdown":
        lines = ["| " + " | ".join(HEADER) + " |", "|" + "---|" * len(HEADER)]
        lines += ["| " + " | ".join(r) + " |" for r in rows]
        return "\n".join(lines) + "\n"
    if format == "text":
        width = max(len(r[0]) for r in rows + [HEADER])
        fmt = f"{{:>{width}}} {{:>9}} {{:>9}} {{:>9}} {{:>9}}"
        lines = [fmt.format(*HEADER)]
        lines += [fmt.format(*r) for r in rows[:-2]]
        lines.append("")
        lines += [fmt.format(*r) for r in rows[-2:]]
        return "\n".join(lines) + "\n"
    raise InputError(f"unknown report format {format!r}")


def parse_report_csv(text: str) -> list[list[str]]:
    return list(csv.reader(io.StringIO(text)))[1:]


def write_confusion_csv(cm: ConfusionMatrix, path: str | Path) -> None:
    Path(path).write_text(cm.to_csv(), encoding="utf-8")
