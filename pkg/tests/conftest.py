import pytest

from exobench.kinematics import default_partition
from exobench.model import default_model


@pytest.fixture(scope="session")
def chain():
    return default_model()


@pytest.fixture(scope="session")
def part(chain):
    return default_partition(chain)
