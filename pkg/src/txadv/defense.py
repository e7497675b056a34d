"""Adversarial training: craft AEs from training rows, retrain, compare.

AEs keep the true label of the row they were generated from and are only
ever drawn from the training split.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

import numpy as np

from . import models
from .attacks import AttackPlan, apply_plans
from .dataset import DatasetHandle
from .errors import ClassAbsent, CodecMismatch, InvalidPlan
from .evaluation import EvaluationReport, evaluate_predictions, label_flow
from .preprocess import EncodedDataset, EncodedRows, FeatureCodec

DEFAULT_RATIO = 0.5


@dataclass(frozen=True)
class DefenseConfig:
    plans: tuple[AttackPlan, ...]
    augmentation_ratio: float = DEFAULT_RATIO
    hyperparams: Mapping[str, Any] = field(default_factory=dict)
    seed: int = 0
    rounds: int = 1

    def __post_init__(self) -> None:
        object.__setattr__(self, "plans", tuple(self.plans))
        if not self.plans:
            raise InvalidPlan("a defense needs at least one attack plan")
        r = float(self.augmentation_ratio)
        if not 0.0 <= r <= 1.0:
            raise InvalidPlan(f"augmentation_ratio must lie in [0, 1], got {r}")
        if int(self.rounds) < 1:
            raise InvalidPlan("rounds must be >= 1")

    @property
    def needs_surrogate(self) -> bool:
        return any(p.is_encoded for p in self.plans)

    def to_json(self) -> dict:
        return {
            "plans": [p.to_json() for p in self.plans],
            "augmentation_ratio": self.augmentation_ratio,
            "hyperparams": dict(self.hyperparams),
            "seed": self.seed,
            "rounds": self.rounds,
        }


@dataclass(frozen=True)
class TrainingAEs:
    matrix: np.ndarray
    labels: np.ndarray
    source_rows: np.ndarray  # index of the generating row in the input train set
    plan_index: np.ndarray

    def __len__(self) -> int:
        return len(self.labels)


def generate_training_aes(
    train: DatasetHandle,
    plans: Sequence[AttackPlan],
    codec: FeatureCodec,
    surrogate: models.SoftmaxSurrogate | None = None,
    *,
    ratio: float = DEFAULT_RATIO,
    seed: int = 0,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
    n_jobs: int = 1,
) -> TrainingAEs:
    """Generate ``ceil(ratio * len(train))`` AEs, one per source row.

    Source rows are a seeded permutation of ``train``; the ``j``-th source
    row is attacked with ``plans[j % len(plans)]``. A plan's own row
    selection applies within the rows assigned to it, so unselected rows are
    reproduced unchanged.
    """
    plans = list(plans)
    if not plans:
        raise InvalidPlan("no attack plans given")
    if any(p.is_encoded for p in plans) and surrogate is None:
        raise InvalidPlan("FGSM plans need a fitted surrogate")
    n = len(train)
    n_ae = min(n, math.ceil(float(ratio) * n - 1e-12))
    order = np.random.default_rng(seed).permutation(n)[:n_ae]
    width = codec.width
    matrix = np.empty((n_ae, width))
    labels = np.empty(n_ae, dtype=np.int64)
    plan_index = np.arange(n_ae) % len(plans)
    for p, plan in enumerate(plans):
        slots = np.flatnonzero(plan_index == p)
        if len(slots) == 0:
            continue
        sources = order[slots]
        subset = train.subset(sources)
        try:
            out = apply_plans([plan], subset, codec, surrogate=surrogate, bounds=bounds, n_jobs=n_jobs)
            matrix[slots], labels[slots] = out.matrix, out.labels
        except ClassAbsent:
            matrix[slots], labels[slots] = codec.transform(subset.rows), subset.labels
    return TrainingAEs(matrix, labels, order.astype(np.int64), plan_index)


@dataclass
class DefenseResult:
    model: models.Classifier
    aes: TrainingAEs
    surrogate: models.SoftmaxSurrogate | None


def adversarial_train(
    kind: str,
    encoded: EncodedDataset,
    defense: DefenseConfig,
    surrogate: models.SoftmaxSurrogate | None = None,
    *,
    model_params: Mapping[str, Any] | None = None,
    surrogate_params: Mapping[str, Any] | None = None,
    n_jobs: int = 1,
) -> DefenseResult:
    """Fit ``kind`` on the training split plus AEs generated from it.

    ``model_params`` are the undefended model's hyperparameters; entries in
    ``defense.hyperparams`` override them. With ``rounds > 1`` the surrogate is
    refitted on each augmented set before the next round's AEs are crafted.
    """
    params = {**dict(model_params or {}), **dict(defense.hyperparams)}
    train_idx = encoded.train_indices
    train_handle = encoded.dataset.subset(train_idx)
    Xtr, ytr = encoded.matrix[train_idx], encoded.labels[train_idx]
    bounds = encoded.train_bounds()
    if defense.needs_surrogate and surrogate is None:
        surrogate = models.fit("surrogate", Xtr, ytr, n_classes=encoded.n_classes, **dict(surrogate_params or {}))

    aes = None
    for r in range(defense.rounds):
        aes = generate_training_aes(
            train_handle,
            defense.plans,
            encoded.codec,
            surrogate,
            ratio=defense.augmentation_ratio,
            seed=defense.seed + r,
            bounds=bounds,
            n_jobs=n_jobs,
        )
        X_aug = np.vstack([Xtr, aes.matrix]) if len(aes) else Xtr
        y_aug = np.concatenate([ytr, aes.labels]) if len(aes) else ytr
        if r + 1 < defense.rounds and defense.needs_surrogate:
            surrogate = models.fit("surrogate", X_aug, y_aug, n_classes=encoded.n_classes, **dict(surrogate_params or {}))

    # map AE provenance back to dataset row indices
    aes = TrainingAEs(aes.matrix, aes.labels, train_idx[aes.source_rows], aes.plan_index)
    model = models.fit(kind, X_aug, y_aug, n_classes=encoded.n_classes, **params)
    return DefenseResult(model, aes, surrogate)


@dataclass
class DefensePair:
    name: str
    pre: EvaluationReport
    post: EvaluationReport
    pre_pred: np.ndarray
    post_pred: np.ndarray

    def to_json(self) -> dict:
        names = self.pre.class_names
        flow = label_flow(self.pre_pred, self.post_pred, names)
        return {
            "accuracy": {"pre": self.pre.accuracy, "post": self.post.accuracy},
            "class_accuracy": {
                n: {"pre": self.pre.metrics.class_accuracy[i], "post": self.post.metrics.class_accuracy[i]}
                for i, n in enumerate(names)
            },
            "instance_counts": {n: self.pre.metrics.support[i] for i, n in enumerate(names)},
            "misclassification_rates": {
                "pre": self.pre.misclassification_rates(),
                "post": self.post.misclassification_rates(),
            },
            "prediction_flow": flow.to_json(),
            "pre": self.pre.to_json(),
            "post": self.post.to_json(),
        }


@dataclass
class DefenseReport:
    pairs: dict[str, DefensePair]

    def __getitem__(self, name: str) -> DefensePair:
        return self.pairs[name]

    def to_json(self) -> dict:
        return {"sets": {name: pair.to_json() for name, pair in self.pairs.items()}}


def evaluate_defense(
    defended: models.Classifier,
    plain: models.Classifier,
    clean: EncodedRows,
    attacked: Mapping[str, EncodedRows],
    class_names: Sequence[str],
    *,
    metadata: Mapping[str, Any] | None = None,
) -> DefenseReport:
    """Score the plain (pre) and defended (post) model on the clean and every attacked set."""
    sets = {"clean": clean, **dict(attacked)}
    digest = clean.codec.digest
    for name, rows in sets.items():
        if rows.codec.digest != digest:
            raise CodecMismatch(f"test set {name!r} was encoded with a different codec")
    pairs = {}
    for name, rows in sets.items():
        meta = {**dict(metadata or {}), "test_set": name}
        pre_pred = plain.predict(rows.matrix)
        post_pred = defended.predict(rows.matrix)
        pre = evaluate_predictions(rows.labels, pre_pred, class_names, {**meta, "stage": "pre"})
        post = evaluate_predictions(rows.labels, post_pred, class_names, {**meta, "stage": "post"})
        pairs[name] = DefensePair(name, pre, post, pre_pred, post_pred)
    return DefenseReport(pairs)
