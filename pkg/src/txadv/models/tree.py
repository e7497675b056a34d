"""CART decision tree (Gini impurity) stored as flat node arrays."""

from __future__ import annotations

import numpy as np

from .base import Classifier, check_training_data, frozen

LEAF = -1


def best_split(X, y_onehot, idx, features, min_samples_leaf):
    """Best Gini split of the rows ``idx`` over candidate ``features``.

    Thresholds are midpoints between consecutive distinct values. Ties go to
    the lowest feature index, then the lowest threshold. Returns
    ``(feature, threshold, weighted_gini)`` or ``None`` if no admissible split
    lowers the impurity.
    """
    m = len(idx)
    counts = y_onehot[idx].sum(axis=0)
    parent = 1.0 - float(np.sum((counts / m) ** 2))
    lo, hi = min_samples_leaf - 1, m - min_samples_leaf - 1
    if hi < lo:
        return None
    best = None
    best_w = parent
    for j in features:
        x = X[idx, j]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        pos = np.arange(lo, hi + 1)
        valid = xs[pos] < xs[pos + 1]
        if not valid.any():
            continue
        cum = np.cumsum(y_onehot[idx[order]], axis=0)
        left = cum[pos]
        right = counts - left
        nl = (pos + 1).astype(np.float64)
        nr = m - nl
        # m * weighted gini = m - sum(left^2)/nl - sum(right^2)/nr
        w = (m - np.sum(left * left, axis=1) / nl - np.sum(right * right, axis=1) / nr) / m
        w = np.where(valid, w, np.inf)
        i = int(np.argmin(w))
        if w[i] < best_w - 1e-12:
            best_w = float(w[i])
            p = pos[i]
            best = (int(j), float((xs[p] + xs[p + 1]) / 2.0), best_w)
    return best


class DecisionTree(Classifier):
    """Gini CART classifier.

    ``max_features`` (``None`` = all) limits the features examined at each
    node to a random subset drawn from ``rng``; this is how the random forest
    decorrelates its trees.
    """

    kind = "dt"

    def __init__(self, max_depth=16, min_samples_leaf=2, max_features=None, seed=0):
        if max_depth < 1:
            raise ValueError("max_depth must be >= 1")
        if min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        self.max_depth = int(max_depth)
        self.min_samples_leaf = int(min_samples_leaf)
        self.max_features = max_features
        self.seed = seed
        self.n_features = None

    def params(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "seed": self.seed,
        }

    def fit(self, X, y, n_classes=None, rng=None):
        X, y, k = check_training_data(X, y, n_classes)
        rng = np.random.default_rng(self.seed) if rng is None else rng
        n, f = X.shape
        n_try = f if self.max_features is None else max(1, min(f, int(self.max_features)))
        onehot = np.eye(k, dtype=np.float64)[y]

        feature, threshold, left, right, value = [], [], [], [], []

        def new_node(idx):
            feature.append(LEAF)
            threshold.append(0.0)
            left.append(LEAF)
            right.append(LEAF)
            value.append(onehot[idx].sum(axis=0) / len(idx))
            return len(feature) - 1

        root = new_node(np.arange(n))
        stack = [(root, np.arange(n), 0)]
        depth_reached = 0
        while stack:
            node, idx, depth = stack.pop()
            depth_reached = max(depth_reached, depth)
            if depth >= self.max_depth or len(idx) < 2 * self.min_samples_leaf:
                continue
            if np.max(value[node]) == 1.0:
                continue
            if n_try < f:
                cands = np.sort(rng.choice(f, n_try, replace=False))
            else:
                cands = range(f)
            split = best_split(X, onehot, idx, cands, self.min_samples_leaf)
            if split is None:
                continue
            j, thr, _ = split
            go_left = X[idx, j] <= thr
            li, ri = idx[go_left], idx[~go_left]
            feature[node], threshold[node] = j, thr
            left[node] = new_node(li)
            right[node] = new_node(ri)
            # right pushed first so the left subtree is expanded first
            stack.append((right[node], ri, depth + 1))
            stack.append((left[node], li, depth + 1))

        self.n_classes = k
        self.n_features = f
        self.depth_ = depth_reached
        self.feature_ = frozen(np.asarray(feature, dtype=np.int64))
        self.threshold_ = frozen(np.asarray(threshold, dtype=np.float64))
        self.left_ = frozen(np.asarray(left, dtype=np.int64))
        self.right_ = frozen(np.asarray(right, dtype=np.int64))
        self.value_ = frozen(np.vstack(value))
        return self

    @property
    def node_count(self) -> int:
        return len(self.feature_)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by each row."""
        X = self._check_rows(X)
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        while True:
            f = self.feature_[node]
            internal = f >= 0
            if not internal.any():
                return node
            r = rows[internal]
            n = node[internal]
            go_left = X[r, f[internal]] <= self.threshold_[n]
            node[internal] = np.where(go_left, self.left_[n], self.right_[n])

    def predict_proba(self, X) -> np.ndarray:
        leaves = self.apply(X)
        return self.value_[leaves].copy()

    def state(self) -> dict:
        return {
            "feature": self.feature_.tolist(),
            "threshold": self.threshold_.tolist(),
            "left": self.left_.tolist(),
            "right": self.right_.tolist(),
            "value": self.value_.tolist(),
            "depth": self.depth_,
        }

    @classmethod
    def from_state(cls, params: dict, state: dict, n_classes: int, n_features: int) -> "DecisionTree":
        tree = cls(**params)
        tree.n_classes = n_classes
        tree.n_features = n_features
        tree.depth_ = state["depth"]
        tree.feature_ = frozen(np.asarray(state["feature"], dtype=np.int64))
        tree.threshold_ = frozen(np.asarray(state["threshold"], dtype=np.float64))
        tree.left_ = frozen(np.asarray(state["left"], dtype=np.int64))
        tree.right_ = frozen(np.asarray(state["right"], dtype=np.int64))
        tree.value_ = frozen(np.asarray(state["value"], dtype=np.float64).reshape(-1, n_classes))
        return tree
