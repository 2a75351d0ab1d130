"""Shared fixtures: synthetic scenarios reused across test modules."""
import numpy as np
import pytest

from loopsim.environment import EnvConfig
from loopsim.scenario import TEMPLATES, synth_scenario


@pytest.fixture(scope="session")
def straight():
    # middle lane, no traffic
    return synth_scenario("straight-3-lane", npcs=0, seed=0, sdc_route=1)


@pytest.fixture(scope="session")
def straight_bottom():
    return synth_scenario("straight-3-lane", npcs=0, seed=0, sdc_route=0)


@pytest.fixture(scope="session")
def tee():
    return synth_scenario("t-junction", npcs=0, seed=0, sdc_route=0)


@pytest.fixture(scope="session")
def four_way():
    return synth_scenario("4-way", npcs=0, seed=0, sdc_route=0)


@pytest.fixture(scope="session")
def wye():
    return synth_scenario("y-junction", npcs=0, seed=0, sdc_route=0)


@pytest.fixture(scope="session")
def all_templates():
    return [synth_scenario(t, npcs=0, seed=0) for t in TEMPLATES]


@pytest.fixture(scope="session")
def traffic_batch():
    # 4 templates x 8 seeds with light traffic; the workhorse set for
    # determinism and closed-loop metric checks
    out = []
    for template in TEMPLATES:
        for seed in range(8):
            out.append(synth_scenario(template, npcs=2, seed=seed))
    return out


@pytest.fixture
def teleport_cfg():
    return EnvConfig(dynamics="default", use_mpc=False)


@pytest.fixture
def bicycle_cfg():
    return EnvConfig(dynamics="bicycle", use_mpc=True)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
