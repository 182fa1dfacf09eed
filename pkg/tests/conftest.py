import pytest

from uavlink.geometry import Scenario, dbm_to_mw, noise_power
from uavlink.links import make_realization


@pytest.fixture(scope="session")
def desk_scenario():
    return Scenario()


@pytest.fixture(scope="session")
def desk_sigma2(desk_scenario):
    return dbm_to_mw(noise_power(desk_scenario))


@pytest.fixture(scope="session")
def desk_realization(desk_scenario):
    return make_realization(desk_scenario, 12345)


@pytest.fixture(scope="session")
def p20_mw():
    return dbm_to_mw(20.0)
