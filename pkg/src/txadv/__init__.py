"""Adversarial robustness toolkit for Ethereum phishing and scam classifiers."""

from .attacks import AttackPlan, Selection, apply_plans, fgsm, perturb
from .dataset import DatasetHandle, Schema, load_csv, synthesize
from .defense import DefenseConfig, adversarial_train, evaluate_defense
from .evaluation import ConfusionMatrix, evaluate, label_flow, metrics
from .preprocess import FeatureCodec, fit_transform

__version__ = "0.1.0"

__all__ = [
    "AttackPlan",
    "ConfusionMatrix",
    "DatasetHandle",
    "DefenseConfig",
    "FeatureCodec",
    "Schema",
    "Selection",
    "adversarial_train",
    "apply_plans",
    "evaluate",
    "evaluate_defense",
    "fgsm",
    "fit_transform",
    "label_flow",
    "load_csv",
    "metrics",
    "perturb",
    "synthesize",
]
