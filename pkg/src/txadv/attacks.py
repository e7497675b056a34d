"""Adversarial perturbations of transaction datasets.

Every raw-record attack is a pure function of ``(dataset, parameters,
seed)``. Randomness is drawn from a per-row generator seeded with
``(seed, row_index)`` so rows can be processed in any order or in parallel
with identical results. FGSM works on encoded matrices instead, using the
softmax surrogate's input gradients.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from .dataset import DatasetHandle, Schema, replace, resolve_class, write_csv
from .errors import (
    ClassAbsent,
    EmptyMask,
    InvalidPlan,
    NegativePct,
    NRowsTooLarge,
    UnknownGroup,
    WidthMismatch,
)
from .models.surrogate import SoftmaxSurrogate
from .preprocess import FeatureCodec, hex_features

TIMESTAMP_SHIFTS = {"+24h": 86_400, "+1h": 3_600, "+30m": 1_800, "+15m": 900, "+5m": 300}
ALLOWED_SHIFTS = frozenset(TIMESTAMP_SHIFTS.values())
ADDRESS_PRESETS = (5_000, 10_000, 23_472)

DEFAULT_VALUE_PCT = 0.01
DEFAULT_TIMESTAMP_TWEAK = 300
DEFAULT_NOISE_SCALE = 0.5
DEFAULT_EPSILON = 0.1

FGSM_MASK = {
    Schema.MULTI: ("value", "gas", "gas_price", "block_timestamp"),
    Schema.BINARY: ("value", "timestamp"),
}

GROUPS = {
    Schema.MULTI: {
        "financial": ("value", "gas", "gas_price"),
        "temporal": ("block_timestamp", "block_number"),
        "address": ("from_address", "to_address"),
    },
    Schema.BINARY: {
        "financial": ("value",),
        "temporal": ("timestamp", "block_height"),
        "address": ("from_addr", "to_addr"),
    },
}
ADDRESS_FIELDS = frozenset({"from_address", "to_address", "from_addr", "to_addr"})
FLOAT_FIELDS = frozenset({"value"})


def group_fields(schema: Schema, group: str) -> tuple[str, ...]:
    groups = GROUPS[schema]
    if group == "all":
        return groups["financial"] + groups["temporal"] + groups["address"] + ("input",)
    try:
        return groups[group]
    except KeyError:
        raise UnknownGroup(f"unknown feature group {group!r}; expected all, address, financial or temporal") from None


# --------------------------------------------------------------------------
# row selection


@dataclass(frozen=True)
class Selection:
    kind: str = "all"
    value: Any = None

    def __post_init__(self) -> None:
        if self.kind not in ("all", "first_n", "class"):
            raise InvalidPlan(f"unknown row selection {self.kind!r}")
        if self.kind == "first_n" and (not isinstance(self.value, int) or self.value < 0):
            raise InvalidPlan(f"first_n needs a non-negative integer, got {self.value!r}")
        if self.kind == "class" and self.value is None:
            raise InvalidPlan("class selection needs a class")

    @classmethod
    def parse(cls, obj) -> "Selection":
        if obj is None or isinstance(obj, Selection):
            return obj or cls()
        if isinstance(obj, str):
            if obj == "all":
                return cls()
            kind, _, arg = obj.partition(":")
            if kind == "first_n":
                return cls("first_n", int(arg))
            if kind == "class":
                return cls("class", arg)
        if isinstance(obj, Mapping) and len(obj) == 1:
            (kind, arg), = obj.items()
            return cls(kind, arg)
        raise InvalidPlan(f"cannot parse row selection {obj!r}")

    def indices(self, dataset: DatasetHandle) -> np.ndarray:
        n = len(dataset)
        if self.kind == "all":
            return np.arange(n)
        if self.kind == "first_n":
            return np.arange(min(self.value, n))
        try:
            c = resolve_class(dataset.schema, self.value)
        except ValueError as exc:
            raise InvalidPlan(str(exc)) from None
        return np.flatnonzero(dataset.labels == c)

    def to_json(self):
        return "all" if self.kind == "all" else {self.kind: self.value}


ALL = Selection()


# --------------------------------------------------------------------------
# results


@dataclass(frozen=True)
class PerturbationResult:
    dataset: DatasetHandle
    touched_rows: tuple[int, ...]
    touched_features: tuple[str, ...]
    plan: "AttackPlan | None" = field(default=None, compare=False)

    @property
    def rows(self) -> tuple:
        return self.dataset.rows

    def sidecar(self) -> dict:
        return {
            "plan": None if self.plan is None else self.plan.to_json(),
            "touched_rows": list(self.touched_rows),
            "touched_features": list(self.touched_features),
        }

    def export(self, csv_path: str | os.PathLike) -> str:
        """Write the perturbed rows as CSV plus a ``.json`` sidecar; returns the sidecar path."""
        write_csv(self.dataset, csv_path)
        side = os.fspath(csv_path) + ".json"
        with open(side, "w", encoding="utf-8") as fh:
            json.dump(self.sidecar(), fh, sort_keys=True, indent=1)
        return side


def row_rng(seed: int, row: int) -> np.random.Generator:
    return np.random.default_rng((int(seed) % 2**64, int(row)))


def _map_rows(
    dataset: DatasetHandle,
    indices: Sequence[int],
    fn: Callable[[int, Any], Any],
    features: Iterable[str],
    n_jobs: int = 1,
    plan: "AttackPlan | None" = None,
) -> PerturbationResult:
    indices = [int(i) for i in indices]
    rows = list(dataset.rows)

    def work(chunk):
        return [fn(i, rows[i]) for i in chunk]

    if n_jobs and n_jobs > 1 and len(indices) > 1:
        size = -(-len(indices) // n_jobs)
        chunks = [indices[s : s + size] for s in range(0, len(indices), size)]
        with ThreadPoolExecutor(n_jobs) as pool:
            done = [r for part in pool.map(work, chunks) for r in part]
    else:
        done = work(indices)
    for i, new in zip(indices, done):
        rows[i] = new
    return PerturbationResult(dataset.with_rows(rows), tuple(indices), tuple(features), plan)


def random_address(rng: np.random.Generator, avoid: set[str]) -> str:
    while True:
        addr = "0x" + rng.bytes(20).hex()
        if addr not in avoid:
            return addr


# --------------------------------------------------------------------------
# minimal manipulations


def timestamp_shift(
    dataset: DatasetHandle,
    shift_seconds: int,
    selection: Selection = ALL,
    *,
    custom: bool = False,
    n_jobs: int = 1,
    plan=None,
) -> PerturbationResult:
    """Move the timestamp of the selected rows ``shift_seconds`` into the future."""
    shift = int(shift_seconds)
    if not custom and shift not in ALLOWED_SHIFTS:
        raise InvalidPlan(f"shift {shift} s is not one of {sorted(ALLOWED_SHIFTS)}; pass custom=True")
    attr = dataset.info.timestamp

    def fn(i, r):
        return replace(r, **{attr: max(0, getattr(r, attr) + shift)})

    return _map_rows(dataset, Selection.parse(selection).indices(dataset), fn, (attr,), n_jobs, plan)


def value_manipulate(
    dataset: DatasetHandle,
    mode: str,
    pct: float = DEFAULT_VALUE_PCT,
    selection: Selection = ALL,
    seed: int = 0,
    *,
    n_jobs: int = 1,
    plan=None,
) -> PerturbationResult:
    """Scale values by ``1 + pct`` (uniform) or ``1 + U(-pct, pct)`` per row (proportional)."""
    pct = float(pct)
    if not pct > 0:
        raise NegativePct(f"percentage must be > 0, got {pct}")
    if mode == "uniform":

        def fn(i, r):
            return replace(r, value=r.value * (1.0 + pct))

    elif mode == "proportional":

        def fn(i, r):
            u = row_rng(seed, i).uniform(-pct, pct)
            return replace(r, value=r.value * (1.0 + u))

    else:
        raise InvalidPlan(f"unknown value mode {mode!r}; expected uniform or proportional")
    return _map_rows(dataset, Selection.parse(selection).indices(dataset), fn, ("value",), n_jobs, plan)


def _field_attr(dataset: DatasetHandle, which: str) -> str:
    which = which.lower()
    if which in ("from", dataset.info.from_addr):
        return dataset.info.from_addr
    if which in ("to", dataset.info.to_addr):
        return dataset.info.to_addr
    raise InvalidPlan(f"address field must be 'from' or 'to', got {which!r}")


def address_substitute(
    dataset: DatasetHandle,
    field: str,
    n_rows: int | None,
    mode: str,
    seed: int = 0,
    selection: Selection = ALL,
    *,
    forbidden: Iterable[str] = (),
    n_jobs: int = 1,
    plan=None,
) -> PerturbationResult:
    """Replace the sender or receiver of ``n_rows`` randomly chosen rows.

    ``shuffle_within`` draws a different address from the field's existing
    pool; ``unseen_random_hex`` generates a fresh 40-digit address absent
    from the dataset and from ``forbidden`` (typically the train vocabulary).
    ``n_rows=None`` means every selected row.
    """
    attr = _field_attr(dataset, field)
    candidates = Selection.parse(selection).indices(dataset)
    if n_rows is None:
        chosen = candidates
    else:
        n_rows = int(n_rows)
        if n_rows < 0:
            raise InvalidPlan("n_rows must be non-negative")
        if n_rows > len(candidates):
            raise NRowsTooLarge(f"n_rows={n_rows} exceeds the {len(candidates)} selectable rows")
        if n_rows == len(candidates):
            chosen = candidates
        else:
            rng = np.random.default_rng((int(seed) % 2**64,))
            chosen = np.sort(rng.choice(candidates, n_rows, replace=False))

    if mode == "shuffle_within":
        pool = sorted({getattr(r, attr) for r in dataset.rows} - {None})

        def fn(i, r):
            own = getattr(r, attr)
            options = len(pool) - (own in pool_set)
            if options <= 0:
                raise InvalidPlan(f"no alternative {attr} available for row {i}")
            k = int(row_rng(seed, i).integers(options))
            if own in pool_set and k >= pool_index[own]:
                k += 1
            return replace(r, **{attr: pool[k]})

        pool_set = set(pool)
        pool_index = {a: j for j, a in enumerate(pool)}
    elif mode == "unseen_random_hex":
        avoid = dataset.addresses() | set(forbidden)

        def fn(i, r):
            return replace(r, **{attr: random_address(row_rng(seed, i), avoid)})

    else:
        raise InvalidPlan(f"unknown address mode {mode!r}; expected shuffle_within or unseen_random_hex")
    return _map_rows(dataset, chosen, fn, (attr,), n_jobs, plan)


# --------------------------------------------------------------------------
# untargeted


def _raw_std(dataset: DatasetHandle, name: str, codec: FeatureCodec | None) -> float:
    if codec is not None:
        try:
            return codec.spec(name).std
        except KeyError:
            pass
    if name == "input_length":
        col = [hex_features(r.input)[0] for r in dataset.rows]
    else:
        col = [getattr(r, name) for r in dataset.rows]
    return max(float(np.std(np.asarray(col, dtype=np.float64))), 1e-12)


def untargeted_group(
    dataset: DatasetHandle,
    group: str,
    noise_scale: float = DEFAULT_NOISE_SCALE,
    seed: int = 0,
    *,
    codec: FeatureCodec | None = None,
    selection: Selection = ALL,
    forbidden: Iterable[str] = (),
    n_jobs: int = 1,
    plan=None,
) -> PerturbationResult:
    """Gaussian noise on the group's numeric fields, fresh addresses for its address fields.

    Noise on a numeric field has standard deviation ``noise_scale`` times the
    field's train standard deviation (taken from ``codec`` when given, else
    from ``dataset``). For ``group="all"`` the payload is also redrawn as
    random bytes with a noisy length.
    """
    fields = group_fields(dataset.schema, group)
    if not float(noise_scale) > 0:
        raise InvalidPlan(f"noise_scale must be > 0, got {noise_scale}")
    scale = float(noise_scale)
    sigma = {f: scale * _raw_std(dataset, "input_length" if f == "input" else f, codec) for f in fields if f not in ADDRESS_FIELDS}
    avoid = dataset.addresses() | set(forbidden)

    def fn(i, r):
        rng = row_rng(seed, i)
        changes = {}
        for f in fields:
            if f in ADDRESS_FIELDS:
                changes[f] = random_address(rng, avoid)
            elif f == "input":
                length = hex_features(r.input)[0]
                new_len = max(0, int(round(length + rng.normal(0.0, sigma[f]))))
                changes[f] = "0x" + rng.bytes(new_len).hex()
            elif f in FLOAT_FIELDS:
                changes[f] = max(0.0, getattr(r, f) + float(rng.normal(0.0, sigma[f])))
            else:
                changes[f] = max(0, int(round(getattr(r, f) + rng.normal(0.0, sigma[f]))))
        return replace(r, **changes)

    return _map_rows(dataset, Selection.parse(selection).indices(dataset), fn, fields, n_jobs, plan)


# --------------------------------------------------------------------------
# targeted, rule based


def rule_based_targeted(
    dataset: DatasetHandle,
    target_class,
    *,
    value_pct: float = DEFAULT_VALUE_PCT,
    timestamp_seconds: int = DEFAULT_TIMESTAMP_TWEAK,
    gas_pct: float = DEFAULT_VALUE_PCT,
    seed: int = 0,
    selection: Selection = ALL,
    forbidden: Iterable[str] = (),
    n_jobs: int = 1,
    plan=None,
) -> PerturbationResult:
    """Class-scoped tweaks that imitate evasion attempts.

    * benign rows: value times ``1 + U(-value_pct, value_pct)`` and timestamp
      plus a uniform integer in ``[-timestamp_seconds, timestamp_seconds]``;
    * phishing rows: unseen sender and receiver addresses, value tweak;
    * scamming rows: gas and gas price times ``1 + U(-gas_pct, gas_pct)``.
    """
    try:
        cls = resolve_class(dataset.schema, target_class)
    except ValueError as exc:
        raise InvalidPlan(str(exc)) from None
    if cls > 2:
        raise InvalidPlan(f"no rule-based plan for class {dataset.class_names[cls]!r}")
    for name, v in (("value_pct", value_pct), ("gas_pct", gas_pct)):
        if not float(v) > 0:
            raise NegativePct(f"{name} must be > 0, got {v}")
    rows = np.intersect1d(Selection.parse(selection).indices(dataset), np.flatnonzero(dataset.labels == cls))
    if len(rows) == 0:
        raise ClassAbsent(f"class {dataset.class_names[cls]!r} has no rows to attack")
    info = dataset.info
    vp, gp, ts = float(value_pct), float(gas_pct), int(timestamp_seconds)

    if cls == 0:
        features = ("value", info.timestamp)

        def fn(i, r):
            rng = row_rng(seed, i)
            value = r.value * (1.0 + rng.uniform(-vp, vp))
            stamp = max(0, getattr(r, info.timestamp) + int(rng.integers(-ts, ts + 1)))
            return replace(r, **{"value": value, info.timestamp: stamp})

    elif cls == 1:
        features = (info.from_addr, info.to_addr, "value")
        avoid = dataset.addresses() | set(forbidden)

        def fn(i, r):
            rng = row_rng(seed, i)
            return replace(
                r,
                **{
                    info.from_addr: random_address(rng, avoid),
                    info.to_addr: random_address(rng, avoid),
                    "value": r.value * (1.0 + rng.uniform(-vp, vp)),
                },
            )

    else:
        features = ("gas", "gas_price")

        def fn(i, r):
            rng = row_rng(seed, i)
            gas = max(0, int(round(r.gas * (1.0 + rng.uniform(-gp, gp)))))
            price = max(0, int(round(r.gas_price * (1.0 + rng.uniform(-gp, gp)))))
            return replace(r, gas=gas, gas_price=price)

    return _map_rows(dataset, rows, fn, features, n_jobs, plan)


# --------------------------------------------------------------------------
# FGSM


def mask_indices(feature_names: Sequence[str], mask: Iterable[str]) -> np.ndarray:
    mask = list(mask)
    if not mask:
        raise EmptyMask("FGSM feature mask is empty")
    unknown = [m for m in mask if m not in feature_names]
    if unknown:
        raise InvalidPlan(f"FGSM mask names unknown features {unknown}")
    return np.array(sorted(feature_names.index(m) for m in set(mask)), dtype=np.int64)


def fgsm(
    X,
    y,
    surrogate: SoftmaxSurrogate,
    epsilon: float = DEFAULT_EPSILON,
    *,
    feature_names: Sequence[str],
    mask: Iterable[str],
    clip: tuple[np.ndarray, np.ndarray] | None = None,
    rows: Sequence[int] | None = None,
) -> np.ndarray:
    """Fast gradient sign step ``x + epsilon * sign(grad_x loss)`` on masked features.

    Only columns named in ``mask`` move; after the step they are clipped to
    ``clip = (low, high)`` (full-width arrays, usually the train min/max).
    ``rows`` restricts the attack to a subset of rows.
    """
    if not float(epsilon) > 0:
        raise InvalidPlan(f"epsilon must be > 0, got {epsilon}")
    X = np.asarray(X, dtype=np.float64)
    feature_names = list(feature_names)
    if X.ndim != 2 or X.shape[1] != len(feature_names) or X.shape[1] != surrogate.n_features:
        raise WidthMismatch(
            f"rows of shape {X.shape} do not match {len(feature_names)} feature names / surrogate width {surrogate.n_features}"
        )
    cols = mask_indices(feature_names, mask)
    out = X.copy()
    rows = np.arange(len(X)) if rows is None else np.asarray(rows, dtype=np.int64)
    if len(rows) == 0:
        return out
    grad = surrogate.input_gradients(X[rows], np.asarray(y)[rows])
    step = float(epsilon) * np.sign(grad[:, cols])
    moved = X[np.ix_(rows, cols)] + step
    if clip is not None:
        lo, hi = (np.asarray(a, dtype=np.float64) for a in clip)
        moved = np.clip(moved, lo[cols], hi[cols])
    out[np.ix_(rows, cols)] = moved
    return out


# --------------------------------------------------------------------------
# declarative plans

FAMILIES = {
    "timestamp_shift": {"shift_seconds": 86_400, "custom": False},
    "value_uniform": {"pct": DEFAULT_VALUE_PCT},
    "value_proportional": {"pct": DEFAULT_VALUE_PCT},
    "address_substitute": {"field": "to", "n_rows": None, "mode": "shuffle_within"},
    "untargeted_group": {"group": "all", "noise_scale": DEFAULT_NOISE_SCALE},
    "rule_based_targeted": {
        "target_class": "Phishing",
        "value_pct": DEFAULT_VALUE_PCT,
        "timestamp_seconds": DEFAULT_TIMESTAMP_TWEAK,
        "gas_pct": DEFAULT_VALUE_PCT,
    },
    "fgsm": {"epsilon": DEFAULT_EPSILON, "mask": None, "clip": True},
}


@dataclass(frozen=True)
class AttackPlan:
    """A named, fully specified perturbation: family, parameters, rows and seed."""

    family: str
    params: Mapping[str, Any] = field(default_factory=dict)
    selection: Selection = ALL
    seed: int = 0
    name: str | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise InvalidPlan(f"unknown attack family {self.family!r}; expected one of {sorted(FAMILIES)}")
        unknown = set(self.params) - set(FAMILIES[self.family])
        if unknown:
            raise InvalidPlan(f"unknown parameter(s) {sorted(unknown)} for {self.family}")
        merged = {**FAMILIES[self.family], **dict(self.params)}
        object.__setattr__(self, "params", merged)
        object.__setattr__(self, "selection", Selection.parse(self.selection))
        self.validate()

    def validate(self) -> None:
        p = self.params
        if self.family == "timestamp_shift":
            if not p["custom"] and int(p["shift_seconds"]) not in ALLOWED_SHIFTS:
                raise InvalidPlan(f"shift {p['shift_seconds']} not in {sorted(ALLOWED_SHIFTS)} (set custom)")
        elif self.family in ("value_uniform", "value_proportional"):
            if not float(p["pct"]) > 0:
                raise NegativePct(f"pct must be > 0, got {p['pct']}")
        elif self.family == "address_substitute":
            if p["mode"] not in ("shuffle_within", "unseen_random_hex"):
                raise InvalidPlan(f"unknown address mode {p['mode']!r}")
            if str(p["field"]).lower() not in ("from", "to"):
                raise InvalidPlan(f"address field must be from or to, got {p['field']!r}")
        elif self.family == "untargeted_group":
            if p["group"] not in ("all", "address", "financial", "temporal"):
                raise UnknownGroup(f"unknown group {p['group']!r}")
            if not float(p["noise_scale"]) > 0:
                raise InvalidPlan("noise_scale must be > 0")
        elif self.family == "fgsm":
            if not float(p["epsilon"]) > 0:
                raise InvalidPlan("epsilon must be > 0")
            if p["mask"] is not None and not list(p["mask"]):
                raise EmptyMask("FGSM feature mask is empty")

    @property
    def label(self) -> str:
        return self.name or self.family

    @property
    def is_encoded(self) -> bool:
        return self.family == "fgsm"

    def to_json(self) -> dict:
        doc = {"family": self.family, "params": dict(self.params), "selection": self.selection.to_json(), "seed": self.seed}
        if self.name:
            doc["name"] = self.name
        return doc

    @classmethod
    def from_json(cls, doc: Mapping) -> "AttackPlan":
        unknown = set(doc) - {"family", "params", "selection", "seed", "name"}
        if unknown:
            raise InvalidPlan(f"unknown attack plan key(s) {sorted(unknown)}")
        if "family" not in doc:
            raise InvalidPlan("attack plan needs a 'family'")
        return cls(
            family=doc["family"],
            params=dict(doc.get("params", {})),
            selection=Selection.parse(doc.get("selection", "all")),
            seed=int(doc.get("seed", 0)),
            name=doc.get("name"),
        )

    def fgsm_mask(self, schema: Schema) -> tuple[str, ...]:
        mask = self.params.get("mask")
        return tuple(mask) if mask is not None else FGSM_MASK[schema]


def perturb(
    plan: AttackPlan,
    dataset: DatasetHandle,
    *,
    codec: FeatureCodec | None = None,
    n_jobs: int = 1,
) -> PerturbationResult:
    """Run a raw-record plan. FGSM plans go through :func:`apply_plans`."""
    p, sel, seed = plan.params, plan.selection, plan.seed
    forbidden = codec.vocabulary() if codec is not None else set()
    f = plan.family
    if f == "timestamp_shift":
        return timestamp_shift(dataset, p["shift_seconds"], sel, custom=p["custom"], n_jobs=n_jobs, plan=plan)
    if f == "value_uniform":
        return value_manipulate(dataset, "uniform", p["pct"], sel, seed, n_jobs=n_jobs, plan=plan)
    if f == "value_proportional":
        return value_manipulate(dataset, "proportional", p["pct"], sel, seed, n_jobs=n_jobs, plan=plan)
    if f == "address_substitute":
        n_rows = p["n_rows"]
        if n_rows is not None and n_rows > len(sel.indices(dataset)) and n_rows in ADDRESS_PRESETS:
            # presets sized for the full binary dataset degrade to "every row" on smaller data
            n_rows = None
        return address_substitute(
            dataset, p["field"], n_rows, p["mode"], seed, sel, forbidden=forbidden, n_jobs=n_jobs, plan=plan
        )
    if f == "untargeted_group":
        return untargeted_group(
            dataset, p["group"], p["noise_scale"], seed, codec=codec, selection=sel, forbidden=forbidden, n_jobs=n_jobs, plan=plan
        )
    if f == "rule_based_targeted":
        return rule_based_targeted(
            dataset,
            p["target_class"],
            value_pct=p["value_pct"],
            timestamp_seconds=p["timestamp_seconds"],
            gas_pct=p["gas_pct"],
            seed=seed,
            selection=sel,
            forbidden=forbidden,
            n_jobs=n_jobs,
            plan=plan,
        )
    raise InvalidPlan(f"{f} operates on encoded rows; use apply_plans")


@dataclass
class AttackOutcome:
    """Encoded result of running a sequence of plans over a dataset."""

    matrix: np.ndarray
    labels: np.ndarray
    dataset: DatasetHandle
    results: list[PerturbationResult]
    touched_rows: np.ndarray


def apply_plans(
    plans: Sequence[AttackPlan],
    dataset: DatasetHandle,
    codec: FeatureCodec,
    *,
    surrogate: SoftmaxSurrogate | None = None,
    bounds: tuple[np.ndarray, np.ndarray] | None = None,
    n_jobs: int = 1,
) -> AttackOutcome:
    """Apply raw plans in order, encode with ``codec``, then apply FGSM plans in order."""
    results = []
    touched: set[int] = set()
    current = dataset
    for plan in plans:
        if plan.is_encoded:
            continue
        res = perturb(plan, current, codec=codec, n_jobs=n_jobs)
        results.append(res)
        touched.update(res.touched_rows)
        current = res.dataset
    X = codec.transform(current.rows)
    y = current.labels
    for plan in plans:
        if not plan.is_encoded:
            continue
        if surrogate is None:
            raise InvalidPlan("an FGSM plan needs a fitted surrogate")
        rows = plan.selection.indices(current)
        X = fgsm(
            X,
            y,
            surrogate,
            plan.params["epsilon"],
            feature_names=codec.feature_names,
            mask=[m for m in plan.fgsm_mask(current.schema) if m in codec.feature_names],
            clip=bounds if plan.params["clip"] else None,
            rows=rows,
        )
        touched.update(int(r) for r in rows)
    return AttackOutcome(X, y, current, results, np.array(sorted(touched), dtype=np.int64))
