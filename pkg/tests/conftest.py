from __future__ import annotations

import pytest

from hacsim.config import parse_config
from hacsim.plant import PlantParams


@pytest.fixture(scope="session")
def cfg():
    return parse_config("")


@pytest.fixture
def plant():
    return PlantParams()
