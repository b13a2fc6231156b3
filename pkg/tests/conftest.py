import os
from pathlib import Path

import numpy as np
import pytest

from bridgevar import diagnostics
from bridgevar.alpha_table import AlphaTable, GridSpec

CACHE = Path(__file__).parent / ".cache"
TABLE_PATH = CACHE / "alpha_table.bvat"


@pytest.fixture(scope="session")
def alpha_table():
    """The default-grid table; built once (several minutes) and cached."""
    if not TABLE_PATH.exists():
        CACHE.mkdir(exist_ok=True)
        AlphaTable.build().save(str(TABLE_PATH))
    return AlphaTable.load(str(TABLE_PATH))


@pytest.fixture(scope="session")
def table_path(alpha_table):
    return str(TABLE_PATH)


@pytest.fixture(scope="session")
def tiny_table():
    """A coarse grid for persistence tests; accuracy is irrelevant here."""
    return AlphaTable.build(GridSpec(6, 6, 8), with_efficiency=False)


@pytest.fixture(autouse=True)
def _fresh_counters():
    diagnostics.reset()
    yield


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def table_env(monkeypatch, table_path):
    monkeypatch.setenv("BRIDGEVAR_TABLE_DIR", os.path.dirname(table_path))
    return table_path
