import pytest

from ecosim.evolution import GAConfig
from ecosim.habitat import HabitatConfig


@pytest.fixture
def ga_cfg():
    return GAConfig()


@pytest.fixture
def flat_ga_cfg():
    """No parsimony, no usage ramp: fitness is plain coverage."""
    return GAConfig(parsimony=0.0, usage_weight_max=0.0)


@pytest.fixture
def habitat_cfg():
    return HabitatConfig()
