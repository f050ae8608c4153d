import pytest

from smibctl.config import default_config
from smibctl.scenarios import Study


@pytest.fixture(scope="session")
def study():
    return Study(default_config())


@pytest.fixture(scope="session")
def cdm(study):
    return study.cdm


@pytest.fixture(scope="session")
def plant(study):
    return study.plant


@pytest.fixture(scope="session")
def op1(study):
    return study.operating_point("I")


@pytest.fixture(scope="session")
def linear(study):
    return study.linear
