from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

from ..errors import DegenerateK
from .base import Classifier, check_training_data, frozen

_CHUNK = 512


class KNearestNeighbors(Classifier):
    """Majority vote among the ``k`` Euclidean-nearest training rows.

    Neighbours are ranked by (distance, label), which makes the vote
    independent of the order the training rows are stored in. Vote ties go to
    the smallest class id.
    """

    kind = "knn"

    def __init__(self, k=5):
        if k < 1:
            raise DegenerateK(f"k must be >= 1, got {k}")
        self.k = int(k)
        self.n_features = None

    def params(self) -> dict:
        return {"k": self.k}

    def fit(self, X, y, n_classes=None):
        X, y, n_cls = check_training_data(X, y, n_classes)
        if self.k > len(X):
            raise DegenerateK(f"k={self.k} exceeds the {len(X)} training rows")
        self.X_ = frozen(X)
        self.y_ = frozen(y)
        self.n_classes = n_cls
        self.n_features = X.shape[1]
        return self

    def kneighbors(self, X) -> np.ndarray:
        """Indices of the ``k`` nearest training rows for each query row."""
        X = self._check_rows(X)
        k = self.k
        out = np.empty((len(X), k), dtype=np.int64)
        for start in range(0, len(X), _CHUNK):
            d = cdist(X[start : start + _CHUNK], self.X_, "sqeuclidean")
            kth = np.partition(d, k - 1, axis=1)[:, k - 1]
            for r in range(len(d)):
                cand = np.flatnonzero(d[r] <= kth[r])
                if len(cand) > k:
                    cand = cand[np.lexsort((self.y_[cand], d[r, cand]))[:k]]
                out[start + r] = cand
        return out

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_rows(X)
        if len(X) == 0:
            return np.zeros((0, self.n_classes))
        votes = self.y_[self.kneighbors(X)]
        counts = np.zeros((len(X), self.n_classes))
        for c in range(self.n_classes):
            counts[:, c] = np.sum(votes == c, axis=1)
        return counts / self.k

    def state(self) -> dict:
        return {"X": self.X_.tolist(), "y": self.y_.tolist()}

    @classmethod
    def from_state(cls, params: dict, state: dict, n_classes: int, n_features: int) -> "KNearestNeighbors":
        model = cls(**params)
        model.X_ = frozen(np.asarray(state["X"], dtype=np.float64).reshape(-1, n_features))
        model.y_ = frozen(np.asarray(state["y"], dtype=np.int64))
        model.n_classes = n_classes
        model.n_features = n_features
        return model
