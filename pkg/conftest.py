"""
Shared pytest fixtures
"""

import numpy as np
import pytest

from config.scenario import scenario_from_dict
from tests.scenarios import SMALL_CAMERA


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def default_config():
    return scenario_from_dict({})


@pytest.fixture
def short_config():
    """GVT scenario of 100 steps with the small camera"""
    return scenario_from_dict({"name": "short", "duration": 2.0, "camera": SMALL_CAMERA})


@pytest.fixture
def short_attack_config():
    """Short GVT scenario with a consistent attack from step 10"""
    return scenario_from_dict({
        "name": "short_attack",
        "duration": 2.0,
        "camera": SMALL_CAMERA,
        "attack": {"enabled": True, "start_step": 10},
    })
