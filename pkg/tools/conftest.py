import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parent.parent
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from swerate.grid import SpaceTimeGrid  # noqa: E402
from swerate.problem import preset  # noqa: E402

PRESETS = ("LINEAR", "NONLIN-A", "NONLIN-B")


@pytest.fixture
def linear():
    return preset("LINEAR")


@pytest.fixture
def nonlin_a():
    return preset("NONLIN-A")


@pytest.fixture(params=PRESETS)
def any_preset(request):
    return preset(request.param)


@pytest.fixture
def small_grid():
    return SpaceTimeGrid(8, 64, 1.0)
