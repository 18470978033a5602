import json
from pathlib import Path

import pytest

from ttlqa.annotation import load_annotations

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="session")
def fixtures_dir() -> Path:
    return FIXTURES


@pytest.fixture(scope="session")
def small_contexts():
    return load_annotations(FIXTURES / "annotations_small.json")


@pytest.fixture(scope="session")
def corpus50():
    return load_annotations(FIXTURES / "corpus50.json")


@pytest.fixture(scope="session")
def queries20():
    return json.loads((FIXTURES / "queries20.json").read_text())


@pytest.fixture(scope="session")
def eval20():
    return json.loads((FIXTURES / "eval20.json").read_text())
