import os
import sys

import pytest

# Ensure the project root is on the Python path
root_dir = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
if root_dir not in sys.path:
    sys.path.insert(0, root_dir)

from engine.model import ChannelPlan, FiniteSizeParams, LinkParams, NoiseProfile  # noqa: E402

CONFIG_PATH = os.path.join(root_dir, "configs", "fdm4.ini")


@pytest.fixture
def config_path():
    return CONFIG_PATH


@pytest.fixture
def plan4():
    return ChannelPlan.uniform(4)


@pytest.fixture
def single_plan():
    return ChannelPlan.uniform(1, first_if_hz=100e6, bases=("amplitude",))


@pytest.fixture
def link():
    return LinkParams()


@pytest.fixture
def finite():
    return FiniteSizeParams()


@pytest.fixture
def quiet_noise():
    return NoiseProfile()
