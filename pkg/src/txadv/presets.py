"""Named experiment grids.

Each preset is a complete config document. Synthetic stand-ins are used for
the data so every preset runs out of the box; point ``dataset`` at a real
CSV (``{"path": ..., "schema": ...}``) to run the same grid on real data.
"""

from __future__ import annotations

import copy

from .attacks import ADDRESS_PRESETS, FGSM_MASK, TIMESTAMP_SHIFTS
from .dataset import Schema

BINARY_MIX = {"benign": 0.68, "phishing": 0.32}
MULTI_MIX = {"Benign": 0.8, "Scamming": 0.156, "Phishing": 0.044}


def _binary(n_rows: int = 3000) -> dict:
    return {"synthetic": {"schema": "binary", "n_rows": n_rows, "class_mix": dict(BINARY_MIX), "separability": 0.95}}


def _multi(n_rows: int = 3000) -> dict:
    return {"synthetic": {"schema": "multi", "n_rows": n_rows, "class_mix": dict(MULTI_MIX), "separability": 0.95}}


def _shift_name(label: str) -> str:
    return "timestamp" + label.replace("+", "_plus_")


def timestamp_grid() -> dict:
    return {
        "description": "Shift every timestamp by 1 day, 1 hour, 30, 15 and 5 minutes.",
        "dataset": _binary(),
        "attacks": [
            {"family": "timestamp_shift", "params": {"shift_seconds": s}, "name": _shift_name(label)}
            for label, s in TIMESTAMP_SHIFTS.items()
        ],
    }


def value_grid() -> dict:
    return {
        "description": "Uniform and proportional 1% changes to the transaction value.",
        "dataset": _binary(),
        "attacks": [
            {"family": "value_uniform", "params": {"pct": 0.01}, "name": "value_uniform_1pct"},
            {"family": "value_proportional", "params": {"pct": 0.01}, "name": "value_proportional_1pct"},
        ],
    }


def address_grid() -> dict:
    return {
        "description": "Shuffle sender or receiver addresses in 5000, 10000 and all 23472 rows.",
        "dataset": _binary(23_472),
        "attacks": [
            {
                "family": "address_substitute",
                "params": {"field": field, "n_rows": n, "mode": "shuffle_within"},
                "name": f"address_{field}_{n}",
            }
            for field in ("from", "to")
            for n in ADDRESS_PRESETS
        ],
    }


def untargeted_groups() -> dict:
    return {
        "description": "Random noise on all features, then on each feature group alone.",
        "dataset": _multi(),
        "attacks": [
            {"family": "untargeted_group", "params": {"group": g}, "name": f"untargeted_{g}"}
            for g in ("all", "address", "financial", "temporal")
        ],
    }


def rule_targeted() -> dict:
    return {
        "description": "Rule-based small changes applied to the rows of one class at a time.",
        "dataset": _multi(),
        "attacks": [
            {
                "family": "rule_based_targeted",
                "params": {"target_class": cls},
                "selection": {"class": cls},
                "name": f"rule_{cls.lower()}",
            }
            for cls in ("Benign", "Phishing", "Scamming")
        ],
    }


def fgsm_targeted() -> dict:
    return {
        "description": "FGSM through the softmax surrogate on the rows of one class at a time.",
        "dataset": _multi(),
        "attacks": [
            {
                "family": "fgsm",
                "params": {"epsilon": 0.1, "mask": list(FGSM_MASK[Schema.MULTI])},
                "selection": {"class": cls},
                "name": f"fgsm_{cls.lower()}",
            }
            for cls in ("Benign", "Phishing", "Scamming")
        ],
    }


def defense_roundtrip() -> dict:
    plans = [
        {"family": "timestamp_shift", "params": {"shift_seconds": 86_400}, "name": "timestamp_plus_24h"},
        {"family": "value_uniform", "params": {"pct": 0.01}, "name": "value_uniform_1pct"},
        {
            "family": "rule_based_targeted",
            "params": {"target_class": "Phishing"},
            "selection": {"class": "Phishing"},
            "name": "rule_phishing",
        },
        {
            "family": "fgsm",
            "params": {"epsilon": 0.1},
            "selection": {"class": "Phishing"},
            "name": "fgsm_phishing",
        },
    ]
    # training AEs use different seeds from the evaluation attacks
    train_plans = [{**p, "seed": 100 + i} for i, p in enumerate(plans)]
    return {
        "description": "Adversarial training against four attacks; reports pre and post defense.",
        "dataset": _multi(),
        "attacks": plans,
        "defense": {"plans": train_plans, "augmentation_ratio": 0.5, "seed": 0},
    }


PRESETS = {
    "timestamp_grid": timestamp_grid,
    "value_grid": value_grid,
    "address_grid": address_grid,
    "untargeted_groups": untargeted_groups,
    "rule_targeted": rule_targeted,
    "fgsm_targeted": fgsm_targeted,
    "defense_roundtrip": defense_roundtrip,
}

# numbered short aliases for the canonical presets
ALIASES = {
    "table2": "timestamp_grid",
    "table3": "value_grid",
    "table4": "address_grid",
    "table5": "rule_targeted",
    "table9": "fgsm_targeted",
    "table12": "untargeted_groups",
    "table7": "defense_roundtrip",
}
PRESETS.update({alias: PRESETS[target] for alias, target in ALIASES.items()})


def resolve(name: str) -> dict:
    """A fresh copy of the preset's config document."""
    return copy.deepcopy(PRESETS[name]())


def presets() -> dict[str, dict]:
    """Every canonical preset by name (aliases excluded)."""
    return {name: resolve(name) for name in PRESETS if name not in ALIASES}
