"""Shared fixtures.

Environment variables that feed CLI precedence are captured once at
import (so an operator-provided live service URL survives for the smoke
test) and then stripped for every test, keeping runs hermetic.
"""

import os
from pathlib import Path

import pytest

# captured before the autouse fixture wipes them
LIVE_PROVIDER_URL = os.environ.get("MATRANK_PROVIDER_URL")
LIVE_MODEL_ID = os.environ.get("MATRANK_MODEL_ID")

REPO_ROOT = Path(__file__).resolve().parents[1]
SAMPLES = REPO_ROOT / "data" / "samples"
SPECS = REPO_ROOT / "data" / "specs"
GOLDEN = Path(__file__).resolve().parent / "golden"


@pytest.fixture(autouse=True)
def _clean_env(monkeypatch):
    for name in ("MATRANK_PROVIDER_URL", "MATRANK_MODEL_ID", "MATRANK_CACHE"):
        monkeypatch.delenv(name, raising=False)


@pytest.fixture
def mock_provider():
    from matrank import MockProvider

    return MockProvider(dim=32)


@pytest.fixture
def curie_csv() -> Path:
    return SAMPLES / "curie_sample.csv"


@pytest.fixture
def gdp_csv() -> Path:
    return SAMPLES / "gdp_sample.csv"


@pytest.fixture
def golden_spec() -> Path:
    return SPECS / "golden_grid.json"


def write_csv(path: Path, rows: list[str]) -> Path:
    path.write_text("\n".join(rows) + "\n", encoding="utf-8")
    return path
