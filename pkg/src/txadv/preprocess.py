"""Cleaning, feature engineering and reversible numeric encoding.

Numeric columns are z-scored with train-split statistics, address and
category columns are label-encoded against the train vocabulary (ids
``0..V-1``, unseen tokens map to ``V``), and the hex ``input`` payload is
reduced to two numbers: its byte length and the integer value of its first
eight hex digits.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from .dataset import (
    BinaryTxRecord,
    DatasetHandle,
    MultiTxRecord,
    Schema,
    replace,
    schema_info,
)
from .errors import SchemaMismatch, SingleClassDataset, WrongSchema

NUMERIC = "numeric-zscore"
CATEGORICAL = "categorical-vocab"
HEXDATA = "hexdata-derived"
PASSTHROUGH = "passthrough"

MISSING_ADDRESS = "Unknown"
MISSING_INPUT = "0x"
MIN_STD = 1e-12
TEST_FRACTION = 0.2

FEATURES: dict[Schema, tuple[tuple[str, str], ...]] = {
    Schema.BINARY: (
        ("block_height", NUMERIC),
        ("timestamp", NUMERIC),
        ("from_addr", CATEGORICAL),
        ("to_addr", CATEGORICAL),
        ("value", NUMERIC),
        ("contract_address", CATEGORICAL),
        ("input_length", HEXDATA),
        ("input_digest", HEXDATA),
    ),
    Schema.MULTI: (
        ("nonce", NUMERIC),
        ("transaction_index", NUMERIC),
        ("from_address", CATEGORICAL),
        ("to_address", CATEGORICAL),
        ("value", NUMERIC),
        ("gas", NUMERIC),
        ("gas_price", NUMERIC),
        ("input_length", HEXDATA),
        ("input_digest", HEXDATA),
        ("receipt_cumulative_gas_used", NUMERIC),
        ("receipt_gas_used", NUMERIC),
        ("block_timestamp", NUMERIC),
        ("block_number", NUMERIC),
        ("from_scam", PASSTHROUGH),
        ("to_scam", PASSTHROUGH),
        ("from_category", CATEGORICAL),
        ("to_category", CATEGORICAL),
        ("combined_category", CATEGORICAL),
    ),
}

# Columns the multi-class label is computed from. They are dropped from the
# feature matrix unless explicitly requested, otherwise every model reads the
# answer straight off the input.
LABEL_COLUMNS = frozenset({"from_scam", "to_scam", "from_category", "to_category", "combined_category"})


# --------------------------------------------------------------------------
# record-level steps


def impute(dataset: DatasetHandle) -> DatasetHandle:
    """Fill missing receivers/contracts with ``"Unknown"`` and payloads with ``"0x"``."""
    return dataset.with_rows([impute_record(r) for r in dataset.rows])


def impute_record(record):
    changes = {}
    if isinstance(record, BinaryTxRecord):
        if record.to_addr is None:
            changes["to_addr"] = MISSING_ADDRESS
        if record.contract_address is None:
            changes["contract_address"] = MISSING_ADDRESS
    else:
        if record.to_address is None:
            changes["to_address"] = MISSING_ADDRESS
    if record.input is None:
        changes["input"] = MISSING_INPUT
    return replace(record, **changes) if changes else record


def hex_features(payload: str | None) -> tuple[int, int]:
    """``(byte length, int(first 8 hex digits))`` of a ``0x``-prefixed payload.

    The digest is 0 when fewer than eight hex digits are present or they are
    not valid hex.
    """
    text = (payload or MISSING_INPUT).strip()
    if text[:2].lower() == "0x":
        text = text[2:]
    length = (len(text) + 1) // 2
    head = text[:8]
    if len(head) < 8:
        return length, 0
    try:
        return length, int(head, 16)
    except ValueError:
        return length, 0


def combine_categories(from_category: str, to_category: str) -> str:
    return f"{from_category}→{to_category}"


def engineer_features(dataset: DatasetHandle) -> DatasetHandle:
    """Attach ``combined_category`` and the numeric payload features to multi-class rows."""
    if dataset.schema is not Schema.MULTI:
        raise WrongSchema("engineer_features applies to the multi schema only")
    rows = []
    for r in dataset.rows:
        length, digest = hex_features(r.input)
        rows.append(
            replace(
                r,
                combined_category=combine_categories(r.from_category, r.to_category),
                input_length=length,
                input_digest=digest,
            )
        )
    return dataset.with_rows(rows)


def raw_feature(record, name: str):
    """Pre-encoding value of feature ``name`` for one (possibly unimputed) record."""
    if name == "input_length":
        return hex_features(record.input)[0]
    if name == "input_digest":
        return hex_features(record.input)[1]
    if name == "combined_category":
        return combine_categories(record.from_category, record.to_category)
    value = getattr(record, name)
    if value is None:
        return MISSING_ADDRESS
    return value


# --------------------------------------------------------------------------
# codec


@dataclass(frozen=True)
class FeatureSpec:
    name: str
    kind: str
    mean: float = 0.0
    std: float = 1.0
    vocab: tuple[str, ...] = ()
    rule: str | None = None

    @cached_property
    def ids(self) -> dict[str, int]:
        return {tok: i for i, tok in enumerate(self.vocab)}

    @property
    def unseen_id(self) -> int:
        return len(self.vocab)

    def to_json(self) -> dict:
        out: dict = {"name": self.name, "kind": self.kind}
        if self.kind in (NUMERIC, HEXDATA):
            out["mean"] = self.mean
            out["std"] = self.std
        if self.kind == CATEGORICAL:
            out["vocab"] = list(self.vocab)
        if self.rule is not None:
            out["rule"] = self.rule
        return out

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureSpec":
        return cls(
            name=doc["name"],
            kind=doc["kind"],
            mean=float(doc.get("mean", 0.0)),
            std=float(doc.get("std", 1.0)),
            vocab=tuple(doc.get("vocab", ())),
            rule=doc.get("rule"),
        )


@dataclass(frozen=True)
class FeatureCodec:
    """Per-feature encoders fitted on the training split."""

    schema: Schema
    features: tuple[FeatureSpec, ...]

    @property
    def feature_names(self) -> list[str]:
        return [f.name for f in self.features]

    @property
    def width(self) -> int:
        return len(self.features)

    def index(self, name: str) -> int:
        for i, f in enumerate(self.features):
            if f.name == name:
                return i
        raise KeyError(f"feature {name!r} is not encoded by this codec")

    def spec(self, name: str) -> FeatureSpec:
        return self.features[self.index(name)]

    def encode_token(self, name: str, token: str) -> int:
        spec = self.spec(name)
        return spec.ids.get(token, spec.unseen_id)

    def decode_token(self, name: str, code: int) -> str | None:
        """Inverse of :meth:`encode_token`; ``None`` for the unseen id."""
        spec = self.spec(name)
        return spec.vocab[code] if 0 <= code < len(spec.vocab) else None

    def decode_numeric(self, name: str, z: np.ndarray | float):
        spec = self.spec(name)
        return np.asarray(z) * spec.std + spec.mean

    def vocabulary(self, *names: str) -> set[str]:
        out: set[str] = set()
        for f in self.features:
            if f.kind == CATEGORICAL and (not names or f.name in names):
                out.update(f.vocab)
        return out

    def transform(self, rows: Sequence) -> np.ndarray:
        rtype = schema_info(self.schema).record_type
        for i, r in enumerate(rows):
            if not isinstance(r, rtype):
                raise SchemaMismatch(
                    f"row {i} is {type(r).__name__}; codec was fitted on {self.schema.value} rows"
                )
        out = np.empty((len(rows), self.width), dtype=np.float64)
        for j, spec in enumerate(self.features):
            col = [raw_feature(r, spec.name) for r in rows]
            if spec.kind == CATEGORICAL:
                ids, unseen = spec.ids, spec.unseen_id
                out[:, j] = [ids.get(tok, unseen) for tok in col]
            elif spec.kind == PASSTHROUGH:
                out[:, j] = np.asarray(col, dtype=np.float64)
            else:
                out[:, j] = (np.asarray(col, dtype=np.float64) - spec.mean) / spec.std
        return out

    def to_json(self) -> dict:
        return {
            "format": "txadv-codec",
            "version": 1,
            "schema": self.schema.value,
            "features": [f.to_json() for f in self.features],
        }

    @classmethod
    def from_json(cls, doc: dict) -> "FeatureCodec":
        if doc.get("format") != "txadv-codec":
            raise ValueError("not a txadv codec document")
        if doc.get("version") != 1:
            raise ValueError(f"unsupported codec version {doc.get('version')!r}")
        return cls(Schema.parse(doc["schema"]), tuple(FeatureSpec.from_json(f) for f in doc["features"]))

    def dumps(self) -> str:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"), ensure_ascii=False)

    @cached_property
    def digest(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def transform_rows(codec: FeatureCodec, rows: Sequence) -> np.ndarray:
    """Encode arbitrary records with an already fitted codec."""
    return codec.transform(rows)


# --------------------------------------------------------------------------
# encoded datasets


@dataclass(frozen=True)
class EncodedRows:
    """A block of encoded rows together with the codec that produced them."""

    matrix: np.ndarray
    labels: np.ndarray
    codec: FeatureCodec = field(compare=False)
    indices: np.ndarray | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.labels)


def encode(codec: FeatureCodec, dataset: DatasetHandle, indices: Iterable[int] | None = None) -> EncodedRows:
    idx = None if indices is None else np.asarray(list(indices), dtype=np.int64)
    return EncodedRows(codec.transform(dataset.rows), dataset.labels, codec, idx)


@dataclass(frozen=True)
class EncodedDataset:
    matrix: np.ndarray
    labels: np.ndarray
    feature_names: list[str]
    codec: FeatureCodec
    is_train: np.ndarray
    dataset: DatasetHandle = field(compare=False, repr=False)

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.dataset.class_names

    @property
    def n_classes(self) -> int:
        return len(self.class_names)

    @property
    def train_indices(self) -> np.ndarray:
        return np.flatnonzero(self.is_train)

    @property
    def test_indices(self) -> np.ndarray:
        return np.flatnonzero(~self.is_train)

    def rows(self, indices: np.ndarray) -> EncodedRows:
        indices = np.asarray(indices, dtype=np.int64)
        return EncodedRows(self.matrix[indices], self.labels[indices], self.codec, indices)

    @property
    def train(self) -> EncodedRows:
        return self.rows(self.train_indices)

    @property
    def test(self) -> EncodedRows:
        return self.rows(self.test_indices)

    @property
    def full(self) -> EncodedRows:
        return self.rows(np.arange(len(self.labels)))

    def train_bounds(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-feature min and max over the encoded train rows."""
        train = self.matrix[self.is_train]
        return train.min(axis=0), train.max(axis=0)


def stratified_split(labels: np.ndarray, seed: int, test_fraction: float = TEST_FRACTION) -> np.ndarray:
    """Boolean train mask for a stratified split.

    The test size is ``round(test_fraction * n)`` distributed over classes by
    largest remainder; classes with fewer than two rows stay in train.
    """
    labels = np.asarray(labels)
    n = len(labels)
    rng = np.random.default_rng(seed)
    classes = sorted(int(c) for c in np.unique(labels))
    members = {c: np.flatnonzero(labels == c) for c in classes}
    eligible = [c for c in classes if len(members[c]) >= 2]
    target = int(math.floor(test_fraction * n + 0.5))
    quota = {c: test_fraction * len(members[c]) for c in eligible}
    take = {c: min(int(math.floor(quota[c])), len(members[c]) - 1) for c in eligible}
    order = sorted(eligible, key=lambda c: (-(quota[c] - math.floor(quota[c])), c))
    remaining = target - sum(take.values())
    while remaining > 0:
        progressed = False
        for c in order:
            if remaining == 0:
                break
            if take[c] < len(members[c]) - 1:
                take[c] += 1
                remaining -= 1
                progressed = True
        if not progressed:
            break
    is_train = np.ones(n, dtype=bool)
    for c in classes:
        perm = rng.permutation(members[c])
        if c in take:
            is_train[perm[: take[c]]] = False
    return is_train


def feature_table(schema: Schema, include_label_columns: bool = False, exclude: Iterable[str] = ()) -> list[tuple[str, str]]:
    drop = set(exclude)
    if not include_label_columns:
        drop |= LABEL_COLUMNS
    return [(name, kind) for name, kind in FEATURES[schema] if name not in drop]


def fit_codec(schema: Schema, train_rows: Sequence, features: Sequence[tuple[str, str]]) -> FeatureCodec:
    specs = []
    for name, kind in features:
        col = [raw_feature(r, name) for r in train_rows]
        if kind == CATEGORICAL:
            specs.append(FeatureSpec(name, kind, vocab=tuple(sorted(set(col)))))
        elif kind == PASSTHROUGH:
            specs.append(FeatureSpec(name, kind))
        else:
            arr = np.asarray(col, dtype=np.float64)
            std = max(float(arr.std()), MIN_STD)
            rule = {"input_length": "hex_byte_length", "input_digest": "hex_first8_int"}.get(name)
            specs.append(FeatureSpec(name, kind, mean=float(arr.mean()), std=std, rule=rule))
    return FeatureCodec(schema, tuple(specs))


def fit_transform(
    dataset: DatasetHandle,
    split_seed: int,
    *,
    include_label_columns: bool = False,
    exclude: Iterable[str] = (),
    test_fraction: float = TEST_FRACTION,
) -> EncodedDataset:
    """Split 80/20 (stratified), fit the codec on train rows and encode everything."""
    labels = dataset.labels
    is_train = stratified_split(labels, split_seed, test_fraction)
    if len(np.unique(labels[is_train])) < 2:
        raise SingleClassDataset("training split contains fewer than two classes")
    train_rows = [r for r, t in zip(dataset.rows, is_train) if t]
    codec = fit_codec(dataset.schema, train_rows, feature_table(dataset.schema, include_label_columns, exclude))
    matrix = codec.transform(dataset.rows)
    return EncodedDataset(matrix, labels, codec.feature_names, codec, is_train, dataset)
