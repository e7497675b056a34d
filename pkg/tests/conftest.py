import os

import numpy as np
import pytest

from txadv.dataset import BinaryTxRecord, DatasetHandle, MultiTxRecord, synthesize
from txadv.preprocess import engineer_features, fit_transform, impute

DATA_DIR = os.environ.get("TXADV_DATA_DIR", os.path.join(os.path.dirname(__file__), "..", "data"))


def addr(i: int) -> str:
    return "0x" + f"{i:040x}"


def brow(i, label, value=1.0, ts=1_600_000_000, frm=None, to=None, inp="0x"):
    return BinaryTxRecord(
        tx_hash="0x" + f"{i:064x}",
        block_height=10_000_000 + i,
        timestamp=ts + i,
        from_addr=frm or addr(1000 + i),
        to_addr=to if to is not None else addr(2000 + i),
        value=value,
        contract_address=None,
        input=inp,
        label=label,
    )


def mrow(i, from_cat="Benign", to_cat="Benign", value=1.0, gas=21000, price=10**9, ts=1_600_000_000):
    return MultiTxRecord(
        hash="0x" + f"{i:064x}",
        nonce=i,
        transaction_index=i % 7,
        from_address=addr(3000 + i),
        to_address=addr(4000 + i),
        value=value,
        gas=gas,
        gas_price=price,
        input="0x",
        receipt_cumulative_gas_used=50000,
        receipt_gas_used=21000,
        block_timestamp=ts + i,
        block_number=10_000_000 + i,
        block_hash="0x" + f"{i:064x}",
        from_scam=int(from_cat != "Benign"),
        to_scam=int(to_cat != "Benign"),
        from_category=from_cat,
        to_category=to_cat,
    )


def prepared(ds: DatasetHandle) -> DatasetHandle:
    ds = impute(ds)
    return engineer_features(ds) if ds.schema.value == "multi" else ds


@pytest.fixture(scope="session")
def binary_500():
    return prepared(synthesize("binary", 500, {0: 0.68, 1: 0.32}, 0.9, 11))


@pytest.fixture(scope="session")
def multi_500():
    return prepared(synthesize("multi", 500, {"Benign": 0.6, "Phishing": 0.2, "Scamming": 0.2}, 0.9, 12))


@pytest.fixture(scope="session")
def multi_encoded(multi_500):
    return fit_transform(multi_500, 3)


@pytest.fixture(scope="session")
def binary_encoded(binary_500):
    return fit_transform(binary_500, 4)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance criteria register their outcome here; printed at the end of the run
ACCEPTANCE: dict[str, tuple[str, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE, key=lambda k: (k[0], int(k[1:]))):
        status, detail = ACCEPTANCE[key]
        terminalreporter.write_line(f"{key}: {status}  {detail}")
