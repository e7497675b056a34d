"""Transaction records, CSV loading/writing and the synthetic generator.

Two schemas are supported:

* ``binary``: ``TxHash, BlockHeight, TimeStamp, From, To, Value,
  ContractAddress, Input, Class`` with ``Class`` in {0 benign, 1 phishing}.
* ``multi``: ``hash, nonce, transaction_index, from_address, to_address,
  value, gas, gas_price, input, receipt_cumulative_gas_used,
  receipt_gas_used, block_timestamp, block_number, block_hash, from_scam,
  to_scam, from_category, to_category``. The label is derived from the two
  category columns (see :func:`multi_label`).

Missing optional cells are kept as ``None``; imputation lives in
:mod:`txadv.preprocess`.
"""

from __future__ import annotations

import csv
import dataclasses
import datetime as _dt
import enum
import io
import math
import os
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .errors import (
    BadClassMix,
    EmptyDataset,
    MissingColumn,
    RowParseError,
    TooFewRows,
    UnknownColumn,
)


class Schema(str, enum.Enum):
    BINARY = "binary"
    MULTI = "multi"

    @classmethod
    def parse(cls, value: "Schema | str") -> "Schema":
        if isinstance(value, Schema):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise ValueError(f"unknown schema {value!r}; expected 'binary' or 'multi'") from None


BINARY_CLASSES = ("benign", "phishing")
MULTI_CLASSES = ("Benign", "Phishing", "Scamming", "Fake ICO")
CATEGORIES = MULTI_CLASSES


@dataclass(frozen=True)
class BinaryTxRecord:
    tx_hash: str
    block_height: int
    timestamp: int
    from_addr: str
    to_addr: str | None
    value: float
    contract_address: str | None
    input: str | None
    label: int


@dataclass(frozen=True)
class MultiTxRecord:
    hash: str
    nonce: int
    transaction_index: int
    from_address: str
    to_address: str | None
    value: float
    gas: int
    gas_price: int
    input: str | None
    receipt_cumulative_gas_used: int
    receipt_gas_used: int
    block_timestamp: int
    block_number: int
    block_hash: str
    from_scam: int
    to_scam: int
    from_category: str
    to_category: str
    # filled in by preprocess.engineer_features
    combined_category: str | None = None
    input_length: int | None = None
    input_digest: int | None = None

    @property
    def label(self) -> int:
        return multi_label(self.from_category, self.to_category)


def multi_label(from_category: str, to_category: str) -> int:
    """Class id of a multi-class row: the receiver's category unless benign,
    otherwise the sender's."""
    cat = to_category if to_category != "Benign" else from_category
    return MULTI_CLASSES.index(cat)


# --------------------------------------------------------------------------
# cell parsers


def _hex(cell: str) -> str:
    cell = cell.strip()
    if not cell:
        raise ValueError("empty identifier")
    return cell


def _opt_hex(cell: str) -> str | None:
    cell = cell.strip()
    return cell or None


def _nonneg_int(cell: str) -> int:
    cell = cell.strip()
    try:
        return_value = int(cell)
    except ValueError:
        f = float(cell)
        if not math.isfinite(f) or not f.is_integer():
            raise ValueError(f"not an integer: {cell!r}") from None
        return_value = int(f)
    if return_value < 0:
        raise ValueError(f"negative value {return_value}")
    return return_value


def _nonneg_float(cell: str) -> float:
    f = float(cell.strip())
    if not math.isfinite(f) or f < 0:
        raise ValueError(f"not a finite non-negative number: {cell!r}")
    return f


def _epoch(cell: str) -> int:
    """Unix seconds from either a number or a date-time string."""
    cell = cell.strip()
    try:
        return _nonneg_int(cell)
    except ValueError:
        pass
    text = cell.removesuffix("UTC").strip().replace("T", " ")
    try:
        stamp = _dt.datetime.fromisoformat(text)
    except ValueError:
        raise ValueError(f"unparseable timestamp {cell!r}") from None
    if stamp.tzinfo is None:
        stamp = stamp.replace(tzinfo=_dt.timezone.utc)
    value = int(stamp.timestamp())
    if value < 0:
        raise ValueError(f"timestamp before epoch: {cell!r}")
    return value


def _flag(cell: str) -> int:
    value = _nonneg_int(cell)
    if value not in (0, 1):
        raise ValueError(f"flag must be 0 or 1, got {value}")
    return value


def _binary_class(cell: str) -> int:
    value = _nonneg_int(cell)
    if value not in (0, 1):
        raise ValueError(f"class must be 0 or 1, got {value}")
    return value


_CATEGORY_LOOKUP = {c.lower(): c for c in CATEGORIES}


def _category(cell: str) -> str:
    key = cell.strip().lower()
    if not key:
        # source exports leave non-scam parties blank
        return "Benign"
    try:
        return _CATEGORY_LOOKUP[key]
    except KeyError:
        raise ValueError(f"unknown category {cell!r}") from None


@dataclass(frozen=True)
class Column:
    name: str  # CSV header
    attr: str  # record attribute
    parse: Callable[[str], Any]


@dataclass(frozen=True)
class SchemaInfo:
    schema: Schema
    record_type: type
    columns: tuple[Column, ...]
    class_names: tuple[str, ...]
    # attribute names playing a common role in both schemas
    timestamp: str
    block: str
    from_addr: str
    to_addr: str
    value: str = "value"

    def column_names(self) -> list[str]:
        return [c.name for c in self.columns]


BINARY_INFO = SchemaInfo(
    schema=Schema.BINARY,
    record_type=BinaryTxRecord,
    columns=(
        Column("TxHash", "tx_hash", _hex),
        Column("BlockHeight", "block_height", _nonneg_int),
        Column("TimeStamp", "timestamp", _epoch),
        Column("From", "from_addr", _hex),
        Column("To", "to_addr", _opt_hex),
        Column("Value", "value", _nonneg_float),
        Column("ContractAddress", "contract_address", _opt_hex),
        Column("Input", "input", _opt_hex),
        Column("Class", "label", _binary_class),
    ),
    class_names=BINARY_CLASSES,
    timestamp="timestamp",
    block="block_height",
    from_addr="from_addr",
    to_addr="to_addr",
)

MULTI_INFO = SchemaInfo(
    schema=Schema.MULTI,
    record_type=MultiTxRecord,
    columns=(
        Column("hash", "hash", _hex),
        Column("nonce", "nonce", _nonneg_int),
        Column("transaction_index", "transaction_index", _nonneg_int),
        Column("from_address", "from_address", _hex),
        Column("to_address", "to_address", _opt_hex),
        Column("value", "value", _nonneg_float),
        Column("gas", "gas", _nonneg_int),
        Column("gas_price", "gas_price", _nonneg_int),
        Column("input", "input", _opt_hex),
        Column("receipt_cumulative_gas_used", "receipt_cumulative_gas_used", _nonneg_int),
        Column("receipt_gas_used", "receipt_gas_used", _nonneg_int),
        Column("block_timestamp", "block_timestamp", _epoch),
        Column("block_number", "block_number", _nonneg_int),
        Column("block_hash", "block_hash", _hex),
        Column("from_scam", "from_scam", _flag),
        Column("to_scam", "to_scam", _flag),
        Column("from_category", "from_category", _category),
        Column("to_category", "to_category", _category),
    ),
    class_names=MULTI_CLASSES,
    timestamp="block_timestamp",
    block="block_number",
    from_addr="from_address",
    to_addr="to_address",
)

SCHEMAS: dict[Schema, SchemaInfo] = {Schema.BINARY: BINARY_INFO, Schema.MULTI: MULTI_INFO}


def schema_info(schema: Schema | str) -> SchemaInfo:
    return SCHEMAS[Schema.parse(schema)]


def resolve_class(schema: Schema | str, label: int | str) -> int:
    """Class id for an integer id or a (case-insensitive) class name."""
    names = schema_info(schema).class_names
    if isinstance(label, (int, np.integer)) and not isinstance(label, bool):
        if 0 <= int(label) < len(names):
            return int(label)
        raise ValueError(f"class id {label} out of range for {len(names)} classes")
    text = str(label).strip()
    if text.isdigit():
        return resolve_class(schema, int(text))
    lowered = {n.lower(): i for i, n in enumerate(names)}
    # "Scam" is how some exports spell the scamming class
    lowered.setdefault("scam", lowered.get("scamming", -1))
    idx = lowered.get(text.lower(), -1)
    if idx < 0:
        raise ValueError(f"unknown class {label!r}; expected one of {list(names)}")
    return idx


# --------------------------------------------------------------------------
# handle


@dataclass(frozen=True)
class DatasetHandle:
    """An immutable, ordered collection of records in one schema."""

    schema: Schema
    rows: tuple
    provenance: str = ""
    class_counts: dict[int, int] = field(init=False, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "schema", Schema.parse(self.schema))
        object.__setattr__(self, "rows", tuple(self.rows))
        rtype = self.info.record_type
        for i, row in enumerate(self.rows):
            if not isinstance(row, rtype):
                raise TypeError(f"row {i} is {type(row).__name__}, expected {rtype.__name__}")
        counts = {c: 0 for c in range(len(self.info.class_names))}
        for row in self.rows:
            counts[row.label] += 1
        object.__setattr__(self, "class_counts", counts)

    @property
    def info(self) -> SchemaInfo:
        return SCHEMAS[self.schema]

    @property
    def class_names(self) -> tuple[str, ...]:
        return self.info.class_names

    @property
    def labels(self) -> np.ndarray:
        return np.fromiter((r.label for r in self.rows), dtype=np.int64, count=len(self.rows))

    def __len__(self) -> int:
        return len(self.rows)

    def subset(self, indices: Iterable[int]) -> "DatasetHandle":
        idx = [int(i) for i in indices]
        return DatasetHandle(self.schema, tuple(self.rows[i] for i in idx), self.provenance)

    def with_rows(self, rows: Sequence) -> "DatasetHandle":
        return DatasetHandle(self.schema, tuple(rows), self.provenance)

    def addresses(self) -> set[str]:
        """Every sender/receiver address appearing in the rows."""
        info = self.info
        out: set[str] = set()
        for r in self.rows:
            for attr in (info.from_addr, info.to_addr):
                a = getattr(r, attr)
                if a is not None:
                    out.add(a)
        return out


# --------------------------------------------------------------------------
# CSV


def load_csv(path: str | os.PathLike, schema: Schema | str) -> DatasetHandle:
    """Parse a CSV export into a :class:`DatasetHandle`.

    The header must contain exactly the schema's columns (any order, case
    insensitive). Raises :class:`UnknownColumn`, :class:`MissingColumn`,
    :class:`RowParseError` or :class:`EmptyDataset`.
    """
    info = schema_info(schema)
    with open(path, newline="", encoding="utf-8") as fh:
        rows = _parse(csv.reader(fh), info)
    return DatasetHandle(info.schema, rows, provenance=f"file:{os.fspath(path)}")


def loads_csv(text: str, schema: Schema | str, provenance: str = "memory") -> DatasetHandle:
    info = schema_info(schema)
    rows = _parse(csv.reader(io.StringIO(text)), info)
    return DatasetHandle(info.schema, rows, provenance=provenance)


def _parse(reader, info: SchemaInfo) -> tuple:
    try:
        header = next(reader)
    except StopIteration:
        raise EmptyDataset("file has no header row") from None
    header = [h.strip().lstrip("﻿") for h in header]
    wanted = {c.name.lower(): c for c in info.columns}
    positions: dict[str, int] = {}
    for pos, name in enumerate(header):
        key = name.lower()
        if key not in wanted:
            raise UnknownColumn(f"column {name!r} is not part of the {info.schema.value} schema")
        positions[wanted[key].attr] = pos
    missing = [c.name for c in info.columns if c.attr not in positions]
    if missing:
        raise MissingColumn(f"missing column(s) {missing} for the {info.schema.value} schema")

    out = []
    for i, cells in enumerate(reader):
        if not cells or all(not c.strip() for c in cells):
            continue
        if len(cells) != len(header):
            raise RowParseError(i, "*", f"expected {len(header)} cells, found {len(cells)}")
        kwargs = {}
        for col in info.columns:
            cell = cells[positions[col.attr]]
            try:
                kwargs[col.attr] = col.parse(cell)
            except ValueError as exc:
                raise RowParseError(i, col.name, str(exc)) from None
        record = info.record_type(**kwargs)
        _check_record(record, i)
        out.append(record)
    if not out:
        raise EmptyDataset("no data rows")
    return tuple(out)


def _check_record(record, row: int) -> None:
    if isinstance(record, MultiTxRecord):
        if record.receipt_gas_used > record.receipt_cumulative_gas_used:
            raise RowParseError(row, "receipt_gas_used", "exceeds receipt_cumulative_gas_used")


def _format(value: Any) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def dumps_csv(dataset: DatasetHandle) -> str:
    buf = io.StringIO()
    write_rows(buf, dataset)
    return buf.getvalue()


def write_rows(fh, dataset: DatasetHandle) -> None:
    info = dataset.info
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(info.column_names())
    for r in dataset.rows:
        writer.writerow([_format(getattr(r, c.attr)) for c in info.columns])


def write_csv(dataset: DatasetHandle, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_rows(fh, dataset)


# --------------------------------------------------------------------------
# synthetic data

T0 = 1_600_000_000
DAY = 86_400
SPAN_DAYS = 30
BLOCK0 = 10_000_000
BLOCK_SECONDS = 13

SIGNAL_GROUPS = {
    Schema.BINARY: ("value", "address", "temporal"),
    Schema.MULTI: ("value", "address", "temporal", "gas"),
}

# value multipliers around a round base amount, per class: (low, high)
_VALUE_BANDS = {0: (1.003, 1.050), 1: (0.992, 0.997), 2: (1.060, 1.090), 3: (1.100, 1.150)}
_VALUE_NOISE = (0.980, 1.150)
_GWEI = 1_000_000_000


def _allocate(n: int, fractions: Sequence[float]) -> list[int]:
    """Largest-remainder rounding of ``n * fractions`` (ties -> lower class)."""
    quotas = [n * f for f in fractions]
    counts = [math.floor(q) for q in quotas]
    rest = n - sum(counts)
    order = sorted(range(len(quotas)), key=lambda i: (-(quotas[i] - counts[i]), i))
    for i in order[:rest]:
        counts[i] += 1
    return counts


def _parse_mix(schema: Schema, class_mix: Mapping) -> list[float]:
    names = SCHEMAS[schema].class_names
    fractions = [0.0] * len(names)
    for key, frac in class_mix.items():
        try:
            idx = resolve_class(schema, key)
        except ValueError as exc:
            raise BadClassMix(str(exc)) from None
        frac = float(frac)
        if not math.isfinite(frac) or frac < 0:
            raise BadClassMix(f"fraction for {key!r} must be non-negative, got {frac}")
        fractions[idx] += frac
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise BadClassMix(f"class fractions sum to {sum(fractions)!r}, expected 1")
    if sum(1 for f in fractions if f > 0) < 1:
        raise BadClassMix("class mix is empty")
    return fractions


def _hexstr(rng: np.random.Generator, nbytes: int) -> str:
    return "0x" + rng.bytes(nbytes).hex()


def synthesize(
    schema: Schema | str,
    n_rows: int,
    class_mix: Mapping,
    separability: float,
    seed: int,
    *,
    signal: Mapping[str, float] | None = None,
) -> DatasetHandle:
    """Generate a labelled transaction dataset with tunable class signal.

    Each signal group (``value``, ``address``, ``temporal`` and, for the
    multi schema, ``gas``) is informative for a row with probability
    ``separability * signal[group]`` (weights default to 1). Informative rows
    draw the group's fields from a class-conditional distribution:

    * value: a round base amount times a class-specific multiplier band
      (benign just above the base, phishing just below it);
    * address: sender/receiver drawn from per-class address pools;
    * temporal: benign rows in the first 20 days, the rest in the last 10;
    * gas: gas price just below (scamming) or above (benign) a round gwei
      level, and a class-dependent gas limit range.

    Uninformative rows use a class-independent distribution. Class counts
    follow ``class_mix`` by largest-remainder rounding. The result depends
    only on the arguments.
    """
    schema = Schema.parse(schema)
    if int(n_rows) != n_rows or n_rows < 10:
        raise TooFewRows(f"n_rows must be an integer >= 10, got {n_rows!r}")
    n = int(n_rows)
    if not 0.0 <= float(separability) <= 1.0:
        raise ValueError(f"separability must lie in [0, 1], got {separability!r}")
    fractions = _parse_mix(schema, class_mix)
    weights = {g: 1.0 for g in SIGNAL_GROUPS[schema]}
    for g, w in (signal or {}).items():
        if g not in weights:
            raise ValueError(f"unknown signal group {g!r}; expected one of {sorted(weights)}")
        if not 0.0 <= float(w) <= 1.0:
            raise ValueError(f"signal weight for {g!r} must lie in [0, 1]")
        weights[g] = float(w)

    rng = np.random.default_rng(seed)
    counts = _allocate(n, fractions)
    labels = rng.permutation(np.repeat(np.arange(len(counts)), counts))
    informative = {g: rng.random(n) < separability * w for g, w in weights.items()}

    # temporal
    late = labels != 0
    t_inf = np.where(late, rng.uniform(20 * DAY, SPAN_DAYS * DAY, n), rng.uniform(0, 20 * DAY, n))
    t_any = rng.uniform(0, SPAN_DAYS * DAY, n)
    timestamps = T0 + np.where(informative["temporal"], t_inf, t_any).astype(np.int64)
    blocks = BLOCK0 + (timestamps - T0) // BLOCK_SECONDS

    # value
    base = 10.0 ** rng.integers(-2, 3, n)
    lo = np.array([_VALUE_BANDS[c][0] for c in labels])
    hi = np.array([_VALUE_BANDS[c][1] for c in labels])
    u = rng.random(n)
    mult = np.where(
        informative["value"],
        lo + u * (hi - lo),
        _VALUE_NOISE[0] + u * (_VALUE_NOISE[1] - _VALUE_NOISE[0]),
    )
    values = np.round(base * mult, 9)

    # address pools: one per (class, direction) plus a shared pool
    n_classes = len(counts)
    pool_sizes = [max(10, n // 50)] + [max(3, n // 300)] * (n_classes - 1)
    from_pools = [[_hexstr(rng, 20) for _ in range(s)] for s in pool_sizes]
    to_pools = [[_hexstr(rng, 20) for _ in range(s)] for s in pool_sizes]
    shared_from = [_hexstr(rng, 20) for _ in range(max(10, n // 50))]
    shared_to = [_hexstr(rng, 20) for _ in range(max(10, n // 50))]
    pick = rng.random((n, 2))

    def choose(pool: list[str], r: float) -> str:
        return pool[int(r * len(pool))]

    from_addrs, to_addrs = [], []
    for i in range(n):
        if informative["address"][i]:
            c = labels[i]
            from_addrs.append(choose(from_pools[c], pick[i, 0]))
            to_addrs.append(choose(to_pools[c], pick[i, 1]))
        else:
            from_addrs.append(choose(shared_from, pick[i, 0]))
            to_addrs.append(choose(shared_to, pick[i, 1]))

    # payloads
    has_input = rng.random(n) < 0.5
    input_bytes = rng.choice([4, 36, 68, 100], n)
    missing_to = rng.random(n) < 0.005
    missing_input = rng.random(n) < 0.01
    inputs: list[str | None] = []
    for i in range(n):
        if missing_input[i]:
            inputs.append(None)
        elif has_input[i]:
            inputs.append(_hexstr(rng, int(input_bytes[i])))
        else:
            inputs.append("0x")
    hashes = [_hexstr(rng, 32) for _ in range(n)]

    provenance = f"synthetic:{schema.value}:n={n}:sep={float(separability)!r}:seed={seed}"
    if schema is Schema.BINARY:
        has_contract = rng.random(n) < 0.1
        contracts = [_hexstr(rng, 20) if has_contract[i] else None for i in range(n)]
        rows = tuple(
            BinaryTxRecord(
                tx_hash=hashes[i],
                block_height=int(blocks[i]),
                timestamp=int(timestamps[i]),
                from_addr=from_addrs[i],
                to_addr=None if missing_to[i] else to_addrs[i],
                value=float(values[i]),
                contract_address=contracts[i],
                input=inputs[i],
                label=int(labels[i]),
            )
            for i in range(n)
        )
        return DatasetHandle(schema, rows, provenance)

    # gas
    level = rng.choice([10, 20, 50, 100], n) * _GWEI
    g = rng.random(n)
    benign_gp = 1.01 + g * 0.04
    scam_gp = 0.97 + g * 0.03
    noise_gp = 0.97 + g * 0.08
    gp_mult = np.where(labels == 2, scam_gp, benign_gp)
    gas_price = np.round(level * np.where(informative["gas"], gp_mult, noise_gp)).astype(np.int64)
    gas_benign = rng.integers(21_000, 60_000, n)
    gas_scam = rng.integers(60_000, 150_000, n)
    gas_noise = rng.integers(21_000, 150_000, n)
    gas = np.where(informative["gas"], np.where(labels == 2, gas_scam, gas_benign), gas_noise)
    used = np.minimum(gas, rng.integers(21_000, 150_000, n))
    cumulative = used + rng.integers(0, 8_000_000, n)
    nonce = rng.integers(0, 5_000, n)
    tx_index = rng.integers(0, 300, n)
    to_side = rng.random(n) < 0.7
    block_hashes = {int(b): None for b in blocks}
    for b in sorted(block_hashes):
        block_hashes[b] = _hexstr(rng, 32)

    rows = []
    for i in range(n):
        cat = MULTI_CLASSES[labels[i]]
        if cat == "Benign":
            from_cat = to_cat = "Benign"
        elif to_side[i]:
            from_cat, to_cat = "Benign", cat
        else:
            from_cat, to_cat = cat, "Benign"
        rows.append(
            MultiTxRecord(
                hash=hashes[i],
                nonce=int(nonce[i]),
                transaction_index=int(tx_index[i]),
                from_address=from_addrs[i],
                to_address=None if missing_to[i] else to_addrs[i],
                value=float(values[i]),
                gas=int(gas[i]),
                gas_price=int(gas_price[i]),
                input=inputs[i],
                receipt_cumulative_gas_used=int(cumulative[i]),
                receipt_gas_used=int(used[i]),
                block_timestamp=int(timestamps[i]),
                block_number=int(blocks[i]),
                block_hash=block_hashes[int(blocks[i])],
                from_scam=int(from_cat != "Benign"),
                to_scam=int(to_cat != "Benign"),
                from_category=from_cat,
                to_category=to_cat,
            )
        )
    return DatasetHandle(schema, tuple(rows), provenance)


def replace(record, **changes):
    """``dataclasses.replace`` re-exported for attack code."""
    return dataclasses.replace(record, **changes)
