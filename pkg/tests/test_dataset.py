import math

import numpy as np
import pytest

from conftest import DATA_DIR, addr, brow, mrow
from txadv import models
from txadv.dataset import (
    DatasetHandle,
    Schema,
    dumps_csv,
    load_csv,
    loads_csv,
    resolve_class,
    synthesize,
    write_csv,
)
from txadv.errors import BadClassMix, EmptyDataset, MissingColumn, RowParseError, TooFewRows, UnknownColumn
from txadv.preprocess import fit_transform

BINARY_HEADER = "TxHash,BlockHeight,TimeStamp,From,To,Value,ContractAddress,Input,Class"


def binary_line(i, value="1.5", to=None, cls="0"):
    to = addr(2000 + i) if to is None else to
    return f"0x{i:064x},{10_000_000 + i},{1_600_000_000 + i},{addr(1000 + i)},{to},{value},,0x,{cls}"


def test_load_binary_csv(tmp_path):
    p = tmp_path / "b.csv"
    p.write_text("\n".join([BINARY_HEADER, binary_line(0), binary_line(1, to="", cls="1")]) + "\n")
    ds = load_csv(p, "binary")
    assert len(ds) == 2
    assert ds.class_counts == {0: 1, 1: 1}
    assert ds.rows[1].to_addr is None  # missing kept as absent until imputation
    assert ds.rows[0].contract_address is None
    assert ds.rows[0].value == 1.5


def test_header_is_case_insensitive_and_any_order():
    cols = BINARY_HEADER.split(",")
    line = binary_line(3).split(",")
    order = list(reversed(range(len(cols))))
    text = ",".join(cols[i].upper() for i in order) + "\n" + ",".join(line[i] for i in order) + "\n"
    ds = loads_csv(text, "binary")
    assert ds.rows[0].block_height == 10_000_003


def test_empty_file_with_header_raises():
    with pytest.raises(EmptyDataset):
        loads_csv(BINARY_HEADER + "\n", "binary")


def test_bad_numeric_names_row_and_column():
    text = "\n".join([BINARY_HEADER, binary_line(0), binary_line(1, value="abc")])
    with pytest.raises(RowParseError) as info:
        loads_csv(text, "binary")
    assert info.value.row == 1
    assert info.value.column == "Value"


def test_unknown_and_missing_columns():
    with pytest.raises(UnknownColumn):
        loads_csv(BINARY_HEADER + ",Extra\n", "binary")
    with pytest.raises(MissingColumn):
        loads_csv(BINARY_HEADER.replace(",Class", "") + "\n", "binary")


def test_multi_label_rules():
    assert mrow(0).label == 0
    assert mrow(1, "Benign", "Phishing").label == 1
    assert mrow(2, "Scamming", "Benign").label == 2
    assert mrow(3, "Fake ICO", "Benign").label == 3


def test_resolve_class_aliases():
    assert resolve_class("multi", "scam") == 2
    assert resolve_class("multi", "PHISHING") == 1
    assert resolve_class("binary", 1) == 1
    with pytest.raises(ValueError):
        resolve_class("binary", 2)


def test_class_counts_sum_to_rows():
    ds = DatasetHandle(Schema.BINARY, [brow(i, i % 3 == 0) for i in range(10)])
    assert sum(ds.class_counts.values()) == len(ds)
    assert ds.class_counts[1] == int(np.sum(ds.labels == 1))


def test_csv_round_trip_binary(tmp_path, binary_500):
    raw = synthesize("binary", 200, {0: 0.7, 1: 0.3}, 0.8, 3)
    p = tmp_path / "r.csv"
    write_csv(raw, p)
    back = load_csv(p, "binary")
    assert back.rows == raw.rows


def test_csv_round_trip_multi():
    raw = synthesize("multi", 200, {"Benign": 0.7, "Phishing": 0.1, "Scamming": 0.2}, 0.8, 3)
    back = loads_csv(dumps_csv(raw), "multi")
    assert back.rows == raw.rows


def test_synthesize_mix_within_one_row():
    mix = {"Benign": 0.79, "Scamming": 0.16, "Phishing": 0.05}
    ds = synthesize("multi", 1000, mix, 0.9, seed=7)
    assert len(ds) == 1000
    for name, frac in mix.items():
        assert abs(ds.class_counts[resolve_class("multi", name)] - 1000 * frac) <= 1


def test_synthesize_is_deterministic():
    mix = {"Benign": 0.79, "Scamming": 0.16, "Phishing": 0.05}
    a = synthesize("multi", 300, mix, 0.9, seed=7)
    b = synthesize("multi", 300, mix, 0.9, seed=7)
    assert dumps_csv(a) == dumps_csv(b)
    c = synthesize("multi", 300, mix, 0.9, seed=8)
    assert dumps_csv(a) != dumps_csv(c)


def test_synthesize_validation():
    with pytest.raises(BadClassMix):
        synthesize("binary", 100, {0: 0.5, 1: 0.4}, 0.5, 0)
    with pytest.raises(BadClassMix):
        synthesize("binary", 100, {"nope": 1.0}, 0.5, 0)
    with pytest.raises(TooFewRows):
        synthesize("binary", 5, {0: 0.5, 1: 0.5}, 0.5, 0)


def test_zero_separability_is_chance_level():
    # with no class signal a fitted model cannot beat predicting the majority class
    accs = []
    for seed in range(3):
        ds = synthesize("binary", 1000, {0: 0.7, 1: 0.3}, 0.0, seed)
        enc = fit_transform(ds, seed)
        m = models.fit("dt", enc.train.matrix, enc.train.labels, max_depth=4, min_samples_leaf=20)
        accs.append(m.score(enc.test.matrix, enc.test.labels))
    assert abs(float(np.mean(accs)) - 0.7) < 0.05


def test_high_separability_is_learnable():
    ds = synthesize("binary", 1000, {0: 0.7, 1: 0.3}, 0.95, 0)
    enc = fit_transform(ds, 0)
    m = models.fit("dt", enc.train.matrix, enc.train.labels)
    assert m.score(enc.test.matrix, enc.test.labels) > 0.9


def test_iso_timestamps_are_epoch():
    line = binary_line(0).split(",")
    line[2] = "2020-09-13 12:26:40 UTC"
    ds = loads_csv(BINARY_HEADER + "\n" + ",".join(line) + "\n", "binary")
    assert ds.rows[0].timestamp == 1_600_000_000


BINARY_PUBLISHED_COUNTS = {0: 15_989, 1: 7_483}


@pytest.mark.skipif(not __import__("os").path.exists(f"{DATA_DIR}/binary.csv"), reason="real binary dataset not supplied")
def test_real_binary_counts():
    ds = load_csv(f"{DATA_DIR}/binary.csv", "binary")
    assert ds.class_counts == BINARY_PUBLISHED_COUNTS
    assert math.isclose(sum(ds.class_counts.values()), 23_472)
