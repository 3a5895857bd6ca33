import numpy as np
import pytest

from scoutstack import _backend
from scoutstack.dataset import Dataset, PlayerSeasonRecord, PositionGroup, StatVector
from scoutstack.labeling import LeagueTier


@pytest.fixture(params=_backend.available())
def kernels(request, monkeypatch):
    """Run a test once per available kernel backend."""
    monkeypatch.setattr(_backend, "kernels", _backend.load(request.param))
    return request.param


def make_record(pid="p1", position=PositionGroup.DEFENDER, tier=None, season="2020-2021", **stats):
    stats.setdefault("minutes", 900.0)
    return PlayerSeasonRecord(pid, position, season, StatVector(**stats), tier)


@pytest.fixture
def small_dataset():
    tiers = [LeagueTier.TOP5, LeagueTier.OTHER_FIRST_DIVISION, LeagueTier.SECOND_DIVISION_OR_NONE]
    recs = tuple(make_record(f"p{i}", tier=t, goals=float(i)) for i, t in enumerate(tiers))
    return Dataset(recs)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
