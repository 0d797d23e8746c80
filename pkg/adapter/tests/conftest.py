from pathlib import Path

import pytest

CONFORMANCE = Path(__file__).resolve().parents[2] / "conformance"


@pytest.fixture(scope="session")
def conformance_dir():
    assert CONFORMANCE.is_dir(), "conformance fixtures missing from the repo"
    return CONFORMANCE
