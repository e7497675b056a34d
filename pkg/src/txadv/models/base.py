from __future__ import annotations

import numpy as np

from ..errors import NotFitted, SingleClassDataset, WidthMismatch


def check_training_data(X, y, n_classes: int | None):
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2:
        raise ValueError(f"expected a 2-D feature matrix, got shape {X.shape}")
    if len(X) != len(y):
        raise ValueError(f"{len(X)} rows but {len(y)} labels")
    if len(np.unique(y)) < 2:
        raise SingleClassDataset("training data must contain at least two classes")
    if y.min() < 0:
        raise ValueError("labels must be non-negative class ids")
    k = int(y.max()) + 1 if n_classes is None else int(n_classes)
    if y.max() >= k:
        raise ValueError(f"label {int(y.max())} out of range for {k} classes")
    return X, y, k


def frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


class Classifier:
    """Shared predict/validation plumbing; subclasses implement ``predict_proba``."""

    kind = "base"
    n_classes: int
    n_features: int

    def _check_rows(self, X) -> np.ndarray:
        if getattr(self, "n_features", None) is None:
            raise NotFitted(f"{type(self).__name__} has not been fitted")
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1 and X.size == 0:
            X = X.reshape(0, self.n_features)
        if X.ndim != 2 or X.shape[1] != self.n_features:
            raise WidthMismatch(f"expected rows of width {self.n_features}, got shape {X.shape}")
        return X

    def predict_proba(self, X) -> np.ndarray:  # pragma: no cover - abstract
        raise NotImplementedError

    def predict(self, X) -> np.ndarray:
        # argmax returns the first maximum: ties go to the smallest class id
        proba = self.predict_proba(X)
        return np.argmax(proba, axis=1).astype(np.int64) if len(proba) else np.zeros(0, dtype=np.int64)

    def score(self, X, y) -> float:
        return float(np.mean(self.predict(X) == np.asarray(y)))
