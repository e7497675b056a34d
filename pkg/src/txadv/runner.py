"""End-to-end experiment execution for one validated config.

Pipeline: load or synthesize data, impute (and engineer multi-class
features), split and encode, fit the models, then evaluate every
(model, attack) cell and the optional defense. Everything written to disk
is a pure function of the config and the dataset bytes.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass
from typing import Any

import numpy as np

from . import models
from ._io import atomic_write, canonical_json, csv_text, sha256_bytes
from .attacks import AttackOutcome, AttackPlan, apply_plans
from .config import ExperimentConfig
from .dataset import DatasetHandle, Schema, dumps_csv, load_csv, synthesize
from .defense import DefenseReport, adversarial_train, evaluate_defense
from .evaluation import EvaluationReport, evaluate_predictions, label_flow
from .preprocess import EncodedDataset, EncodedRows, engineer_features, fit_transform, impute

MANIFEST_FORMAT = "txadv-manifest"
MANIFEST_VERSION = 1
SEEDED_KINDS = ("rf", "dt")

TABLE_COLUMNS = ["model", "attack", "scope", "accuracy", "class", "precision", "recall", "f1", "support", "predicted_count"]
LONG_COLUMNS = ["model", "attack", "scope", "class", "metric", "value"]
FLOW_COLUMNS = ["model", "attack", "from", "to", "count"]
DEFENSE_COLUMNS = ["model", "test_set", "stage", "accuracy", "class", "class_accuracy", "support", "predicted_count"]


def slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "_", str(text)).strip("_") or "x"


def _unique(names: list[str]) -> list[str]:
    seen: dict[str, int] = {}
    out = []
    for n in names:
        k = seen.get(n, 0)
        seen[n] = k + 1
        out.append(n if k == 0 else f"{n}_{k + 1}")
    return out


def _offset(plan: AttackPlan, seed: int) -> AttackPlan:
    return AttackPlan(plan.family, plan.params, plan.selection, plan.seed + seed, plan.name)


@dataclass
class RunResult:
    out_dir: str
    manifest: dict
    manifest_digest: str
    baseline: dict[str, EvaluationReport]
    attacked: dict[tuple[str, str], EvaluationReport]
    defense: dict[str, DefenseReport]


def load_dataset(config: ExperimentConfig) -> tuple[DatasetHandle, dict]:
    """The raw dataset and a description of where it came from (with a content digest)."""
    spec = config.dataset
    if spec.path is not None:
        with open(spec.path, "rb") as fh:
            digest = sha256_bytes(fh.read())
        ds = load_csv(spec.path, spec.schema)
        source = {"kind": "csv", "path": spec.path}
    else:
        s = spec.synthetic
        seed = int(s.get("seed", 0)) + config.seed
        ds = synthesize(
            s["schema"], int(s["n_rows"]), s["class_mix"], float(s["separability"]), seed, signal=s.get("signal")
        )
        digest = sha256_bytes(dumps_csv(ds).encode("utf-8"))
        source = {"kind": "synthetic", "seed": seed}
    info = {
        **source,
        "schema": ds.schema.value,
        "digest": digest,
        "n_rows": len(ds),
        "class_counts": {ds.class_names[c]: n for c, n in ds.class_counts.items()},
    }
    return ds, info


def prepare(ds: DatasetHandle, config: ExperimentConfig) -> EncodedDataset:
    ds = impute(ds)
    if ds.schema is Schema.MULTI:
        ds = engineer_features(ds)
    return fit_transform(
        ds,
        config.split_seed,
        include_label_columns=config.include_label_columns,
        exclude=config.exclude_features,
    )


class _Writer:
    """Collects output files and their digests."""

    def __init__(self, root: str):
        self.root = root
        self.files: dict[str, str] = {}

    def write(self, rel: str, data: str | bytes) -> None:
        self.files[rel] = atomic_write(os.path.join(self.root, rel), data)


def run(config: ExperimentConfig, out_dir: str | None = None) -> RunResult:
    out = out_dir or config.output_dir
    writer = _Writer(out)
    raw, dataset_info = load_dataset(config)
    enc = prepare(raw, config)
    names = enc.class_names
    codec = enc.codec
    train = enc.train
    eval_idx = np.arange(len(enc.labels)) if config.scope == "full_dataset" else enc.test_indices
    eval_handle = enc.dataset.subset(eval_idx)
    clean = enc.rows(eval_idx)
    bounds = enc.train_bounds()

    # models
    fitted: dict[str, models.Classifier] = {}
    model_params: dict[str, dict] = {}
    for spec in config.models:
        params = dict(spec.params)
        if spec.kind in SEEDED_KINDS:
            params["seed"] = int(params.get("seed", 0)) + config.seed
        if spec.kind == "rf":
            params.setdefault("n_jobs", config.n_jobs)
        model_params[spec.label] = params
        fitted[spec.label] = models.fit(spec.kind, train.matrix, train.labels, n_classes=enc.n_classes, **params)

    surrogate = None
    surrogate_params = dict(config.surrogate)
    surrogate_params["seed"] = int(surrogate_params.get("seed", 0)) + config.seed
    if config.needs_surrogate:
        surrogate = models.fit("surrogate", train.matrix, train.labels, n_classes=enc.n_classes, **surrogate_params)

    # attacks (model independent)
    plans = [_offset(p, config.seed) for p in config.attacks]
    attack_names = _unique([slug(p.label) for p in plans])
    outcomes: dict[str, AttackOutcome] = {}
    for name, plan in zip(attack_names, plans):
        outcomes[name] = apply_plans([plan], eval_handle, codec, surrogate=surrogate, bounds=bounds, n_jobs=config.n_jobs)

    scope = config.scope
    baseline: dict[str, EvaluationReport] = {}
    base_pred: dict[str, np.ndarray] = {}
    attacked: dict[tuple[str, str], EvaluationReport] = {}
    cells = []
    for label, model in fitted.items():
        pred = model.predict(clean.matrix)
        base_pred[label] = pred
        rep = evaluate_predictions(clean.labels, pred, names, {"model": label, "attack": "baseline", "scope": scope})
        baseline[label] = rep
        writer.write(f"reports/baseline__{slug(label)}.json", canonical_json(rep.to_json()))
        for name, oc in outcomes.items():
            post = model.predict(oc.matrix)
            arep = evaluate_predictions(oc.labels, post, names, {"model": label, "attack": name, "scope": scope})
            arep.flow = label_flow(pred, post, names)
            attacked[(label, name)] = arep
            rel = f"reports/attack__{slug(name)}__{slug(label)}.json"
            writer.write(rel, canonical_json(arep.to_json()))
            cells.append({"model": label, "attack": name, "baseline": f"reports/baseline__{slug(label)}.json", "attacked": rel})

    # defense
    defense_reports: dict[str, DefenseReport] = {}
    if config.defense is not None:
        d = config.defense
        d = type(d)(
            plans=tuple(_offset(p, config.seed) for p in d.plans),
            augmentation_ratio=d.augmentation_ratio,
            hyperparams=d.hyperparams,
            seed=d.seed + config.seed,
            rounds=d.rounds,
        )
        if outcomes:
            test_sets = {n: EncodedRows(oc.matrix, oc.labels, codec) for n, oc in outcomes.items()}
        else:
            test_sets = {}
            for n, p in zip(_unique([slug(p.label) for p in d.plans]), d.plans):
                oc = apply_plans([p], eval_handle, codec, surrogate=surrogate, bounds=bounds, n_jobs=config.n_jobs)
                test_sets[n] = EncodedRows(oc.matrix, oc.labels, codec)
        for spec in config.models:
            label = spec.label
            result = adversarial_train(
                spec.kind,
                enc,
                d,
                surrogate,
                model_params=model_params[label],
                surrogate_params=surrogate_params,
                n_jobs=config.n_jobs,
            )
            report = evaluate_defense(
                result.model, fitted[label], clean, test_sets, names, metadata={"model": label, "scope": scope}
            )
            defense_reports[label] = report
            doc = report.to_json()
            doc["augmentation"] = {"n_examples": len(result.aes), "n_train": len(train), "config": d.to_json()}
            rel = f"reports/defense__{slug(label)}.json"
            writer.write(rel, canonical_json(doc))
            for cell in cells:
                if cell["model"] == label:
                    cell["defense"] = rel
            if not outcomes:
                cells.append({"model": label, "attack": None, "defense": rel})

    _write_tables(writer, baseline, attacked, defense_reports)
    if config.write_artifacts:
        _write_artifacts(writer, outcomes, plans, attack_names, codec.feature_names, scope)
    writer.write("codec.json", codec.dumps())

    cfg = {k: v for k, v in config.raw.items() if k != "output_dir"}
    manifest = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "config": cfg,
        "config_digest": sha256_bytes(canonical_json(cfg).encode("utf-8")),
        "dataset": dataset_info,
        "codec_digest": codec.digest,
        "scope": scope,
        "n_train": int(len(train)),
        "n_eval": int(len(clean)),
        "seeds": {
            "global": config.seed,
            "split": config.split_seed,
            "models": {k: v.get("seed") for k, v in model_params.items()},
            "surrogate": surrogate_params["seed"] if surrogate is not None else None,
            "attacks": {n: p.seed for n, p in zip(attack_names, plans)},
            "defense": None if config.defense is None else config.defense.seed + config.seed,
        },
        "cells": cells,
        "files": dict(sorted(writer.files.items())),
    }
    text = canonical_json(manifest)
    digest = atomic_write(os.path.join(out, "manifest.json"), text)
    return RunResult(out, manifest, digest, baseline, attacked, defense_reports)


def _write_tables(writer: _Writer, baseline, attacked, defense_reports) -> None:
    rows, long_rows, flows = [], [], []
    for rep in baseline.values():
        rows += rep.table_rows()
        long_rows += rep.long_rows()
    for (label, name), rep in attacked.items():
        rows += rep.table_rows()
        long_rows += rep.long_rows()
        names = rep.class_names
        for i, a in enumerate(names):
            for j, b in enumerate(names):
                flows.append({"model": label, "attack": name, "from": a, "to": b, "count": int(rep.flow.counts[i, j])})
    writer.write("tables/results.csv", csv_text(rows, TABLE_COLUMNS))
    writer.write("tables/long.csv", csv_text(long_rows, LONG_COLUMNS))
    if flows:
        writer.write("tables/flow.csv", csv_text(flows, FLOW_COLUMNS))
    if defense_reports:
        drows = []
        for label, report in defense_reports.items():
            for set_name, pair in report.pairs.items():
                for stage, rep in (("pre", pair.pre), ("post", pair.post)):
                    m = rep.metrics
                    for i, cls in enumerate(rep.class_names):
                        drows.append(
                            {
                                "model": label,
                                "test_set": set_name,
                                "stage": stage,
                                "accuracy": m.accuracy,
                                "class": cls,
                                "class_accuracy": m.class_accuracy[i],
                                "support": m.support[i],
                                "predicted_count": m.predicted[i],
                            }
                        )
        writer.write("tables/defense.csv", csv_text(drows, DEFENSE_COLUMNS))


def _write_artifacts(writer: _Writer, outcomes, plans, attack_names, feature_names, scope) -> None:
    for name, plan in zip(attack_names, plans):
        oc = outcomes[name]
        side: dict[str, Any] = {
            "plan": plan.to_json(),
            "scope": scope,
            "touched_rows": [int(r) for r in oc.touched_rows],
        }
        if plan.is_encoded:
            cols = list(feature_names) + ["label"]
            data = [dict(zip(cols, [*map(float, row), int(y)])) for row, y in zip(oc.matrix, oc.labels)]
            side["encoded"] = True
            writer.write(f"artifacts/{name}.csv", csv_text(data, cols))
        else:
            side["encoded"] = False
            side["touched_features"] = sorted({f for r in oc.results for f in r.touched_features})
            writer.write(f"artifacts/{name}.csv", dumps_csv(oc.dataset))
        writer.write(f"artifacts/{name}.csv.json", canonical_json(side))
