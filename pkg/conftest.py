from datetime import datetime

import pytest

from src.fixtures import DEFAULT_FIXTURE_MODEL
from src.ingest import DoorState, StateSeries

# Вторник, чётная ISO-неделя
TUESDAY = datetime(2013, 10, 1)

LABELS = {"o": DoorState.OPEN, "m": DoorState.MOVE, "c": DoorState.CLOSED}


def series_from(start, letters):
    """Ряд состояний из строки вида "ocm..." (по символу на час)."""
    return StateSeries(start, tuple(LABELS[letter] for letter in letters))


@pytest.fixture
def tuesday():
    return TUESDAY


@pytest.fixture
def fixture_model():
    return DEFAULT_FIXTURE_MODEL


@pytest.fixture
def output_folder(tmp_path, monkeypatch):
    monkeypatch.setenv("OUTPUT_FOLDER", str(tmp_path / "output"))
    return tmp_path / "output"
