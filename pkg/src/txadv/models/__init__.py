"""Classifiers: CART tree, random forest, KNN and the softmax surrogate.

All models take encoded feature matrices and integer class ids, are
deterministic for a fixed seed and are not modified after ``fit``.
"""

from __future__ import annotations

import json
import os
from typing import Any

import numpy as np

from .base import Classifier
from .forest import RandomForest
from .knn import KNearestNeighbors
from .surrogate import SoftmaxSurrogate, input_gradient, softmax
from .tree import DecisionTree

MODEL_TYPES: dict[str, type] = {
    "rf": RandomForest,
    "dt": DecisionTree,
    "knn": KNearestNeighbors,
    "surrogate": SoftmaxSurrogate,
}
ALIASES = {
    "random_forest": "rf",
    "decision_tree": "dt",
    "k_nearest_neighbors": "knn",
    "softmax": "surrogate",
}
DISPLAY_NAMES = {"rf": "RF", "dt": "DT", "knn": "KNN", "surrogate": "Surrogate"}

FORMAT = "txadv-model"
VERSION = 1


def canonical_kind(kind: str) -> str:
    key = str(kind).lower()
    key = ALIASES.get(key, key)
    if key not in MODEL_TYPES:
        raise ValueError(f"unknown model kind {kind!r}; expected one of {sorted(MODEL_TYPES)}")
    return key


def make_model(kind: str, **params) -> Classifier:
    return MODEL_TYPES[canonical_kind(kind)](**params)


def fit(kind: str, X, y, n_classes: int | None = None, **params) -> Classifier:
    """Construct a model of ``kind`` with ``params`` and fit it."""
    return make_model(kind, **params).fit(X, y, n_classes=n_classes)


def predict(model: Classifier, X) -> np.ndarray:
    return model.predict(X)


def predict_proba(model: Classifier, X) -> np.ndarray:
    return model.predict_proba(X)


def to_json(model: Classifier) -> dict[str, Any]:
    return {
        "format": FORMAT,
        "version": VERSION,
        "kind": model.kind,
        "n_classes": model.n_classes,
        "n_features": model.n_features,
        "params": model.params(),
        "state": model.state(),
    }


def from_json(doc: dict[str, Any]) -> Classifier:
    if doc.get("format") != FORMAT:
        raise ValueError("not a txadv model document")
    if doc.get("version") != VERSION:
        raise ValueError(f"unsupported model document version {doc.get('version')!r}")
    cls = MODEL_TYPES[canonical_kind(doc["kind"])]
    return cls.from_state(doc["params"], doc["state"], int(doc["n_classes"]), int(doc["n_features"]))


def save(model: Classifier, path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(to_json(model), fh, sort_keys=True)


def load(path: str | os.PathLike) -> Classifier:
    with open(path, encoding="utf-8") as fh:
        return from_json(json.load(fh))


__all__ = [
    "Classifier",
    "DecisionTree",
    "KNearestNeighbors",
    "RandomForest",
    "SoftmaxSurrogate",
    "fit",
    "from_json",
    "input_gradient",
    "load",
    "make_model",
    "predict",
    "predict_proba",
    "save",
    "softmax",
    "to_json",
]
