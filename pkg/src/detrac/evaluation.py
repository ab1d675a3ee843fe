"""Multi-class confusion matrix and derived accuracy/sensitivity/specificity.

Orientation is normative: rows index the true class, columns the predicted
class, so FP for class i is the off-diagonal sum of column i and FN the
off-diagonal sum of row i. Rates with a zero denominator are reported as
None (an explicit undefined marker) rather than 0.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .dataset import LabelSpace
from .errors import DataError


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    counts: np.ndarray
    label_space: LabelSpace

    def __post_init__(self):
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        c = len(self.label_space)
        if counts.shape != (c, c):
            raise DataError(f"confusion matrix must be {c}x{c}, got {counts.shape}")
        if counts.min() < 0:
            raise DataError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)

    @property
    def n(self) -> int:
        return int(self.counts.sum())


@dataclass(frozen=True)
class ClassMetrics:
    name: str
    tp: int
    tn: int
    fp: int
    fn: int
    accuracy: float
    sensitivity: float | None
    specificity: float | None
    precision: float | None


@dataclass(frozen=True)
class MetricsReport:
    label_space: LabelSpace
    n: int
    overall_accuracy: float
    positive_class: str
    per_class: tuple[ClassMetrics, ...]
    macro_sensitivity: float | None
    macro_specificity: float | None
    confusion: np.ndarray

    @property
    def headline(self) -> ClassMetrics:
        """Metrics of the designated positive class."""
        idx = self.label_space.index(self.positive_class)
        return self.per_class[idx]

    def to_json(self) -> str:
        doc = {
            "n": self.n,
            "classes": list(self.label_space.names),
            "overall_accuracy": self.overall_accuracy,
            "positive_class": self.positive_class,
            "headline": {
                "accuracy": self.headline.accuracy,
                "sensitivity": self.headline.sensitivity,
                "specificity": self.headline.specificity,
            },
            "macro": {
                "sensitivity": self.macro_sensitivity,
                "specificity": self.macro_specificity,
            },
            "per_class": [
                {
                    "name": cm.name,
                    "tp": cm.tp,
                    "tn": cm.tn,
                    "fp": cm.fp,
                    "fn": cm.fn,
                    "accuracy": cm.accuracy,
                    "sensitivity": cm.sensitivity,
                    "specificity": cm.specificity,
                    "precision": cm.precision,
                }
                for cm in self.per_class
            ],
            "confusion": self.confusion.tolist(),
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def to_text(self) -> str:
        """Aligned table: one row per class plus the overall/headline rows."""

        def fmt(v):
            return "undef" if v is None else f"{100.0 * v:6.2f}%"

        width = max(len(n) for n in self.label_space.names + ("overall",))
        lines = [
            f"{'class':<{width}}  {'ACC':>8}  {'SN':>8}  {'SP':>8}  {'PREC':>8}",
        ]
        for cm in self.per_class:
            lines.append(
                f"{cm.name:<{width}}  {fmt(cm.accuracy):>8}  {fmt(cm.sensitivity):>8}"
                f"  {fmt(cm.specificity):>8}  {fmt(cm.precision):>8}"
            )
        lines.append(
            f"{'overall':<{width}}  {fmt(self.overall_accuracy):>8}  "
            f"{fmt(self.macro_sensitivity):>8}  {fmt(self.macro_specificity):>8}  "
            f"{'':>8}  (macro SN/SP)"
        )
        lines.append(f"positive class: {self.positive_class}")
        return "\n".join(lines) + "\n"

    def save_json(self, path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8")


def confusion(
    true_labels: np.ndarray, pred_labels: np.ndarray, label_space: LabelSpace
) -> ConfusionMatrix:
    """Count matrix: entry (i, j) is #samples with true class i predicted j."""
    t = np.asarray(true_labels, dtype=np.int64)
    p = np.asarray(pred_labels, dtype=np.int64)
    if t.shape != p.shape or t.ndim != 1:
        raise DataError("true and predicted label arrays must be equal-length vectors")
    c = len(label_space)
    if t.size:
        if t.min() < 0 or t.max() >= c or p.min() < 0 or p.max() >= c:
            raise DataError("label index out of range")
    counts = np.zeros((c, c), dtype=np.int64)
    np.add.at(counts, (t, p), 1)
    return ConfusionMatrix(counts=counts, label_space=label_space)


def per_class_counts(M: ConfusionMatrix, i: int) -> tuple[int, int, int, int]:
    """(TP, TN, FP, FN) for class i.

    TP is the diagonal entry; TN sums entries outside row i and column i;
    FP is column i without the diagonal; FN is row i without the diagonal.
    """
    c = len(M.label_space)
    if not 0 <= i < c:
        raise DataError(f"class index {i} out of range")
    counts = M.counts
    tp = int(counts[i, i])
    fp = int(counts[:, i].sum() - counts[i, i])
    fn = int(counts[i, :].sum() - counts[i, i])
    tn = int(counts.sum() - tp - fp - fn)
    return tp, tn, fp, fn


def _rate(num: int, den: int) -> float | None:
    return None if den == 0 else num / den


def metrics(M: ConfusionMatrix, positive_class: int | str = 0) -> MetricsReport:
    """Per-class and aggregate ACC/SN/SP (+precision) from a confusion matrix.

    The headline sensitivity/specificity follow the designated positive class;
    macro averages over classes with defined values are reported alongside.
    """
    n = M.n
    if n == 0:
        raise DataError("cannot compute metrics on an empty confusion matrix")
    if isinstance(positive_class, str):
        pos_idx = M.label_space.index(positive_class)
    else:
        pos_idx = int(positive_class)
        if not 0 <= pos_idx < len(M.label_space):
            raise DataError(f"positive class index {pos_idx} out of range")

    per_class = []
    for i, name in enumerate(M.label_space.names):
        tp, tn, fp, fn = per_class_counts(M, i)
        per_class.append(
            ClassMetrics(
                name=name,
                tp=tp,
                tn=tn,
                fp=fp,
                fn=fn,
                accuracy=(tp + tn) / n,
                sensitivity=_rate(tp, tp + fn),
                specificity=_rate(tn, tn + fp),
                precision=_rate(tp, tp + fp),
            )
        )

    sn_defined = [cm.sensitivity for cm in per_class if cm.sensitivity is not None]
    sp_defined = [cm.specificity for cm in per_class if cm.specificity is not None]
    return MetricsReport(
        label_space=M.label_space,
        n=n,
        overall_accuracy=float(np.trace(M.counts)) / n,
        positive_class=M.label_space.names[pos_idx],
        per_class=tuple(per_class),
        macro_sensitivity=sum(sn_defined) / len(sn_defined) if sn_defined else None,
        macro_specificity=sum(sp_defined) / len(sp_defined) if sp_defined else None,
        confusion=M.counts,
    )
