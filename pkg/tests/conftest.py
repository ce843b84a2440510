from pathlib import Path

import pytest

ROOT = Path(__file__).parent.parent


@pytest.fixture
def small_samples(monkeypatch):
    # atlas and restriction checks on fewer points
    monkeypatch.setenv("DIFFSPACE_SAMPLE_COUNT", "200")
    monkeypatch.setenv("DIFFSPACE_XI_ATLAS_PIECES", "20")


@pytest.fixture
def tour_source():
    return (ROOT / "scripts" / "tour.ds").read_text()
