"""Experiment configuration: a single JSON document, validated up front.

Unknown keys are rejected at every level so typos such as ``"epsilonn"``
fail before any work starts. ``"preset": NAME`` pulls in a named preset and
the remaining keys override it (nested objects are merged).
"""

from __future__ import annotations

import copy
import json
import os
import re
from dataclasses import dataclass, field
from typing import Mapping

from .attacks import AttackPlan
from .dataset import Schema
from .defense import DefenseConfig
from .errors import ConfigError, TxAdvError
from .models import canonical_kind, make_model

SCOPES = ("full_dataset", "test_split")

TOP_KEYS = {
    "preset",
    "description",
    "dataset",
    "split_seed",
    "features",
    "models",
    "surrogate",
    "attacks",
    "defense",
    "scope",
    "output_dir",
    "seed",
    "n_jobs",
    "write_artifacts",
}
SYNTH_KEYS = {"schema", "n_rows", "class_mix", "separability", "seed", "signal"}
FILE_KEYS = {"path", "schema"}
FEATURE_KEYS = {"include_label_columns", "exclude"}
MODEL_KEYS = {"kind", "params", "name"}
SURROGATE_KEYS = {"lr", "epochs", "l2", "seed"}
DEFENSE_KEYS = {"plans", "augmentation_ratio", "hyperparams", "seed", "rounds"}


@dataclass(frozen=True)
class ModelSpec:
    kind: str
    params: dict = field(default_factory=dict)
    name: str | None = None

    @property
    def label(self) -> str:
        return self.name or self.kind


@dataclass(frozen=True)
class DatasetSpec:
    schema: Schema
    path: str | None = None
    synthetic: dict | None = None


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetSpec
    split_seed: int
    models: tuple[ModelSpec, ...]
    attacks: tuple[AttackPlan, ...]
    defense: DefenseConfig | None
    scope: str
    output_dir: str
    seed: int
    surrogate: dict
    include_label_columns: bool = False
    exclude_features: tuple[str, ...] = ()
    n_jobs: int = 1
    write_artifacts: bool = True
    raw: dict = field(default_factory=dict, compare=False)

    @property
    def needs_surrogate(self) -> bool:
        return any(p.is_encoded for p in self.attacks) or (self.defense is not None and self.defense.needs_surrogate)


def _reject_unknown(doc: Mapping, allowed: set[str], where: str) -> None:
    if not isinstance(doc, Mapping):
        raise ConfigError(f"{where} must be an object")
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown key {unknown[0]!r} in {where}" + (f" (also {unknown[1:]})" if len(unknown) > 1 else ""))


def _int(doc: Mapping, key: str, default: int, where: str) -> int:
    value = doc.get(key, default)
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(f"{where}.{key} must be an integer, got {value!r}")
    return value


def deep_merge(base: Mapping, override: Mapping) -> dict:
    out = copy.deepcopy(dict(base))
    for k, v in override.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), Mapping):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def expand_preset(doc: Mapping) -> dict:
    from .presets import PRESETS, resolve

    if "preset" not in doc:
        return dict(doc)
    name = doc["preset"]
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; run 'txadv presets' for the list")
    base = resolve(name)
    rest = {k: v for k, v in doc.items() if k != "preset"}
    merged = deep_merge(base, rest)
    merged["preset"] = name
    return merged


def _check_params(kind: str, params, where: str) -> None:
    """Construct the model once so bad hyperparameters fail before any work."""
    if not isinstance(params, Mapping):
        raise ConfigError(f"{where} must be an object")
    try:
        make_model(kind, **params)
    except TypeError as exc:
        bad = re.search(r"argument '(\w+)'", str(exc))
        raise ConfigError(f"unknown key {bad.group(1)!r} in {where}" if bad else f"{where}: {exc}") from None
    except (TxAdvError, ValueError) as exc:
        raise ConfigError(f"{where}: {exc}") from None


def _plans(items, where: str) -> tuple[AttackPlan, ...]:
    if not isinstance(items, list):
        raise ConfigError(f"{where} must be a list of attack plans")
    out = []
    for i, item in enumerate(items):
        try:
            out.append(AttackPlan.from_json(item))
        except (TxAdvError, ValueError, TypeError) as exc:
            raise ConfigError(f"{where}[{i}]: {exc}") from None
    return tuple(out)


def validate(doc: Mapping) -> ExperimentConfig:
    """Check a raw config document and build an :class:`ExperimentConfig`."""
    if not isinstance(doc, Mapping):
        raise ConfigError("config must be a JSON object")
    _reject_unknown(doc, TOP_KEYS, "config")
    doc = expand_preset(doc)
    _reject_unknown(doc, TOP_KEYS, "config")

    seed = _int(doc, "seed", 0, "config")
    ds = doc.get("dataset")
    if not isinstance(ds, Mapping):
        raise ConfigError("config.dataset is required")
    if "synthetic" in ds:
        _reject_unknown(ds, {"synthetic"}, "config.dataset")
        synth = ds["synthetic"]
        _reject_unknown(synth, SYNTH_KEYS, "config.dataset.synthetic")
        for key in ("schema", "n_rows", "class_mix", "separability"):
            if key not in synth:
                raise ConfigError(f"config.dataset.synthetic.{key} is required")
        try:
            schema = Schema.parse(synth["schema"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if not isinstance(synth["class_mix"], Mapping):
            raise ConfigError("config.dataset.synthetic.class_mix must be an object")
        dataset = DatasetSpec(schema, synthetic=dict(synth))
    else:
        _reject_unknown(ds, FILE_KEYS, "config.dataset")
        if "path" not in ds or "schema" not in ds:
            raise ConfigError("config.dataset needs 'path' and 'schema' (or 'synthetic')")
        try:
            schema = Schema.parse(ds["schema"])
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        dataset = DatasetSpec(schema, path=str(ds["path"]))

    features = doc.get("features", {})
    _reject_unknown(features, FEATURE_KEYS, "config.features")

    models = []
    for i, m in enumerate(doc.get("models", [{"kind": "rf"}, {"kind": "dt"}, {"kind": "knn"}])):
        _reject_unknown(m, MODEL_KEYS, f"config.models[{i}]")
        try:
            kind = canonical_kind(m.get("kind", ""))
        except ValueError as exc:
            raise ConfigError(f"config.models[{i}]: {exc}") from None
        if kind == "surrogate":
            raise ConfigError(f"config.models[{i}]: the surrogate is configured under 'surrogate'")
        params = m.get("params", {})
        _check_params(kind, params, f"config.models[{i}].params")
        models.append(ModelSpec(kind, dict(params), m.get("name")))
    if not models:
        raise ConfigError("config.models must list at least one model")
    labels = [m.label for m in models]
    if len(set(labels)) != len(labels):
        raise ConfigError(f"duplicate model names {labels}; set 'name' to disambiguate")

    surrogate = doc.get("surrogate", {})
    _reject_unknown(surrogate, SURROGATE_KEYS, "config.surrogate")
    _check_params("surrogate", surrogate, "config.surrogate")

    attacks = _plans(doc.get("attacks", []), "config.attacks")

    defense = None
    if doc.get("defense") is not None:
        d = doc["defense"]
        _reject_unknown(d, DEFENSE_KEYS, "config.defense")
        try:
            defense = DefenseConfig(
                plans=_plans(d.get("plans", []), "config.defense.plans"),
                augmentation_ratio=float(d.get("augmentation_ratio", 0.5)),
                hyperparams=dict(d.get("hyperparams", {})),
                seed=_int(d, "seed", 0, "config.defense"),
                rounds=_int(d, "rounds", 1, "config.defense"),
            )
        except (TxAdvError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"config.defense: {exc}") from None
        for m in models:
            _check_params(m.kind, {**m.params, **defense.hyperparams}, "config.defense.hyperparams")

    scope = doc.get("scope", "full_dataset")
    if scope not in SCOPES:
        raise ConfigError(f"config.scope must be one of {list(SCOPES)}, got {scope!r}")
    n_jobs = _int(doc, "n_jobs", 1, "config")
    if n_jobs < 1:
        raise ConfigError("config.n_jobs must be >= 1")
    exclude = features.get("exclude", [])
    if not isinstance(exclude, list):
        raise ConfigError("config.features.exclude must be a list")

    return ExperimentConfig(
        dataset=dataset,
        split_seed=_int(doc, "split_seed", seed, "config"),
        models=tuple(models),
        attacks=attacks,
        defense=defense,
        scope=scope,
        output_dir=str(doc.get("output_dir", "txadv-out")),
        seed=seed,
        surrogate=dict(surrogate),
        include_label_columns=bool(features.get("include_label_columns", False)),
        exclude_features=tuple(exclude),
        n_jobs=n_jobs,
        write_artifacts=bool(doc.get("write_artifacts", True)),
        raw=dict(doc),
    )


def load(path: str | os.PathLike, seed: int | None = None) -> ExperimentConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    except OSError as exc:
        raise ConfigError(f"{path}: {exc.strerror}") from None
    if seed is not None:
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        doc = {**doc, "seed": seed}
    return validate(doc)
