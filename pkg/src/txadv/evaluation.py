"""Confusion matrices, per-class metrics, label-flow matrices and reports.

Precision, recall and F1 are one-vs-rest per class. A zero denominator makes
the metric 0 and records a flag such as ``"precision:Phishing"`` in
``zero_division``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from .errors import EmptyConfusion, LengthMismatch


@dataclass(frozen=True)
class ConfusionMatrix:
    """Counts with rows = true label and columns = predicted label."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    def __post_init__(self) -> None:
        counts = np.asarray(self.counts, dtype=np.int64)
        k = len(self.class_names)
        if counts.shape != (k, k):
            raise ValueError(f"confusion of shape {counts.shape} for {k} classes")
        if (counts < 0).any():
            raise ValueError("confusion counts must be non-negative")
        object.__setattr__(self, "counts", counts)
        object.__setattr__(self, "class_names", tuple(self.class_names))

    @classmethod
    def from_predictions(cls, y_true, y_pred, class_names: Sequence[str]) -> "ConfusionMatrix":
        y_true = np.asarray(y_true, dtype=np.int64)
        y_pred = np.asarray(y_pred, dtype=np.int64)
        if y_true.shape != y_pred.shape:
            raise LengthMismatch(f"{len(y_true)} true labels vs {len(y_pred)} predictions")
        k = len(class_names)
        counts = np.bincount(y_true * k + y_pred, minlength=k * k).reshape(k, k)
        return cls(counts, tuple(class_names))

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, ConfusionMatrix)
            and self.class_names == other.class_names
            and np.array_equal(self.counts, other.counts)
        )


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    precision: tuple[float, ...]
    recall: tuple[float, ...]
    f1: tuple[float, ...]
    support: tuple[int, ...]
    predicted: tuple[int, ...]
    zero_division: tuple[str, ...]

    @property
    def class_accuracy(self) -> tuple[float, ...]:
        """Fraction of each class's rows predicted correctly (= recall)."""
        return self.recall

    @property
    def macro(self) -> dict[str, float]:
        return {
            "precision": float(np.mean(self.precision)),
            "recall": float(np.mean(self.recall)),
            "f1": float(np.mean(self.f1)),
        }


def _ratio(num: float, den: float) -> tuple[float, bool]:
    return (num / den, False) if den > 0 else (0.0, True)


def metrics(confusion: ConfusionMatrix) -> Metrics:
    c = confusion.counts
    total = int(c.sum())
    if total <= 0:
        raise EmptyConfusion("confusion matrix has no entries")
    tp = np.diag(c)
    support = c.sum(axis=1)
    predicted = c.sum(axis=0)
    precision, recall, f1, flags = [], [], [], []
    for i, name in enumerate(confusion.class_names):
        p, p_zero = _ratio(float(tp[i]), float(predicted[i]))
        r, r_zero = _ratio(float(tp[i]), float(support[i]))
        if p_zero:
            flags.append(f"precision:{name}")
        if r_zero:
            flags.append(f"recall:{name}")
        precision.append(p)
        recall.append(r)
        f1.append(0.0 if p + r == 0 else 2.0 * p * r / (p + r))
    return Metrics(
        accuracy=float(np.trace(c)) / total,
        precision=tuple(precision),
        recall=tuple(recall),
        f1=tuple(f1),
        support=tuple(int(s) for s in support),
        predicted=tuple(int(s) for s in predicted),
        zero_division=tuple(flags),
    )


@dataclass(frozen=True)
class FlowMatrix:
    """Entry ``(i, j)`` counts rows predicted ``i`` before and ``j`` after an attack."""

    counts: np.ndarray
    class_names: tuple[str, ...]

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def changes(self, source: int | str) -> list[int]:
        """Counts moving out of ``source`` to every other class, in class order."""
        i = source if isinstance(source, (int, np.integer)) else self.class_names.index(source)
        return [int(self.counts[i, j]) for j in range(len(self.class_names)) if j != i]

    def rates(self) -> np.ndarray:
        """Row-normalised flows; the denominator is the pre-attack predicted count."""
        rows = self.counts.sum(axis=1, keepdims=True)
        return np.divide(self.counts, rows, out=np.zeros(self.counts.shape), where=rows > 0)

    def to_json(self) -> dict:
        names = self.class_names
        out = {"class_names": list(names), "counts": self.counts.tolist(), "changes": {}}
        for i, src in enumerate(names):
            out["changes"][src] = {names[j]: int(self.counts[i, j]) for j in range(len(names)) if j != i}
        return out

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, FlowMatrix)
            and self.class_names == other.class_names
            and np.array_equal(self.counts, other.counts)
        )


def label_flow(pre, post, class_names: Sequence[str]) -> FlowMatrix:
    pre = np.asarray(pre, dtype=np.int64)
    post = np.asarray(post, dtype=np.int64)
    if pre.shape != post.shape:
        raise LengthMismatch(f"{len(pre)} pre-attack vs {len(post)} post-attack predictions")
    k = len(class_names)
    counts = np.bincount(pre * k + post, minlength=k * k).reshape(k, k)
    return FlowMatrix(counts, tuple(class_names))


@dataclass
class EvaluationReport:
    confusion: ConfusionMatrix
    metrics: Metrics
    metadata: dict[str, Any] = field(default_factory=dict)
    flow: FlowMatrix | None = None

    @property
    def accuracy(self) -> float:
        return self.metrics.accuracy

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.confusion.class_names

    def recall_of(self, cls: int | str) -> float:
        i = cls if isinstance(cls, (int, np.integer)) else self.class_names.index(cls)
        return self.metrics.recall[i]

    def misclassification_rates(self) -> dict[str, float]:
        """``"A → B"`` → share of true-``A`` rows predicted ``B``."""
        c = self.confusion.counts
        names = self.class_names
        out = {}
        for i, a in enumerate(names):
            n = c[i].sum()
            for j, b in enumerate(names):
                if i != j and n > 0:
                    out[f"{a} → {b}"] = float(c[i, j]) / float(n)
        return out

    def to_json(self) -> dict:
        m = self.metrics
        names = self.class_names
        per_class = {
            name: {
                "precision": m.precision[i],
                "recall": m.recall[i],
                "f1": m.f1[i],
                "accuracy": m.class_accuracy[i],
                "support": m.support[i],
                "predicted_count": m.predicted[i],
            }
            for i, name in enumerate(names)
        }
        doc = {
            "accuracy": m.accuracy,
            "class_names": list(names),
            "per_class": per_class,
            "confusion": self.confusion.counts.tolist(),
            "zero_division": list(m.zero_division),
            "macro": m.macro,
            "extensions": ["macro"],
            "metadata": self.metadata,
        }
        if self.flow is not None:
            doc["label_flow"] = self.flow.to_json()
        return doc

    def table_rows(self) -> list[dict[str, Any]]:
        """One row per class, mirroring the published table layout."""
        m = self.metrics
        base = {k: self.metadata.get(k, "") for k in ("model", "attack", "scope")}
        return [
            {
                **base,
                "accuracy": m.accuracy,
                "class": name,
                "precision": m.precision[i],
                "recall": m.recall[i],
                "f1": m.f1[i],
                "support": m.support[i],
                "predicted_count": m.predicted[i],
            }
            for i, name in enumerate(self.class_names)
        ]

    def long_rows(self) -> list[dict[str, Any]]:
        """Plot-ready long format: one (class, metric, value) per row."""
        out = []
        base = {k: self.metadata.get(k, "") for k in ("model", "attack", "scope")}
        out.append({**base, "class": "*", "metric": "accuracy", "value": self.metrics.accuracy})
        for row in self.table_rows():
            for metric in ("precision", "recall", "f1", "support", "predicted_count"):
                out.append({**base, "class": row["class"], "metric": metric, "value": row[metric]})
        return out


def evaluate_predictions(
    y_true, y_pred, class_names: Sequence[str], metadata: Mapping[str, Any] | None = None
) -> EvaluationReport:
    cm = ConfusionMatrix.from_predictions(y_true, y_pred, class_names)
    return EvaluationReport(cm, metrics(cm), dict(metadata or {}))


def evaluate(
    model,
    X,
    y,
    class_names: Sequence[str],
    scope: str = "test_split",
    metadata: Mapping[str, Any] | None = None,
) -> EvaluationReport:
    """Predict ``X`` with ``model`` and score against ``y``."""
    pred = model.predict(X)
    return evaluate_predictions(y, pred, class_names, {"scope": scope, **dict(metadata or {})})
