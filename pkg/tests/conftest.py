import numpy as np
import pytest

from hjhomog.problems import get_problem


@pytest.fixture
def rng():
    return np.random.default_rng(20240817)


@pytest.fixture(scope="session")
def eikonal_plain():
    return get_problem("eikonal-1d", coupling="none")


@pytest.fixture(scope="session")
def eikonal_coupled():
    return get_problem("eikonal-1d", coupling="sin")


@pytest.fixture(scope="session")
def linear2():
    return get_problem("linear-coupling-2sys")


@pytest.fixture(scope="session")
def example11_problem():
    return get_problem("example11")
