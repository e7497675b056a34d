from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .base import Classifier, check_training_data
from .tree import DecisionTree


class RandomForest(Classifier):
    """Bagged CART trees with per-node feature subsampling.

    Tree ``t`` draws its bootstrap sample and feature subsets from
    ``default_rng(seed + t)``, so fitting in parallel gives the same forest as
    fitting serially. Probabilities are the mean of the trees' leaf vectors.
    """

    kind = "rf"

    def __init__(
        self,
        n_trees=100,
        max_depth=16,
        min_samples_leaf=2,
        max_features="sqrt",
        bootstrap=True,
        seed=0,
        n_jobs=1,
    ):
        if n_trees < 1:
            raise ValueError("n_trees must be >= 1")
        self.n_trees = int(n_trees)
        self.max_depth = max_depth
        self.min_samples_leaf = min_samples_leaf
        self.max_features = max_features
        self.bootstrap = bool(bootstrap)
        self.seed = seed
        self.n_jobs = n_jobs
        self.n_features = None

    def params(self) -> dict:
        return {
            "n_trees": self.n_trees,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
            "max_features": self.max_features,
            "bootstrap": self.bootstrap,
            "seed": self.seed,
        }

    def _features_per_split(self, f: int):
        if self.max_features is None:
            return None
        if self.max_features == "sqrt":
            return max(1, math.ceil(math.sqrt(f)))
        return int(self.max_features)

    def fit(self, X, y, n_classes=None):
        X, y, k = check_training_data(X, y, n_classes)
        n, f = X.shape
        per_split = self._features_per_split(f)

        def grow(t: int) -> DecisionTree:
            rng = np.random.default_rng(self.seed + t)
            idx = rng.integers(0, n, n) if self.bootstrap else np.arange(n)
            tree = DecisionTree(self.max_depth, self.min_samples_leaf, per_split, seed=self.seed + t)
            # a single-class bootstrap sample cannot be split; use the full sample
            Xi, yi = X[idx], y[idx]
            if len(np.unique(yi)) < 2:
                Xi, yi = X, y
            return tree.fit(Xi, yi, n_classes=k, rng=rng)

        if self.n_jobs and self.n_jobs > 1:
            with ThreadPoolExecutor(self.n_jobs) as pool:
                trees = list(pool.map(grow, range(self.n_trees)))
        else:
            trees = [grow(t) for t in range(self.n_trees)]
        self.trees_ = tuple(trees)
        self.n_classes = k
        self.n_features = f
        return self

    def predict_proba(self, X) -> np.ndarray:
        X = self._check_rows(X)
        total = np.zeros((len(X), self.n_classes))
        for tree in self.trees_:
            total += tree.predict_proba(X)
        return total / len(self.trees_)

    def state(self) -> dict:
        return {"trees": [t.state() for t in self.trees_], "tree_seeds": [t.seed for t in self.trees_]}

    @classmethod
    def from_state(cls, params: dict, state: dict, n_classes: int, n_features: int) -> "RandomForest":
        forest = cls(**params)
        per_split = forest._features_per_split(n_features)
        forest.trees_ = tuple(
            DecisionTree.from_state(
                {
                    "max_depth": forest.max_depth,
                    "min_samples_leaf": forest.min_samples_leaf,
                    "max_features": per_split,
                    "seed": seed,
                },
                s,
                n_classes,
                n_features,
            )
            for s, seed in zip(state["trees"], state["tree_seeds"])
        )
        forest.n_classes = n_classes
        forest.n_features = n_features
        return forest
