import numpy as np
import pytest

from gridjac.network import RawCase
from gridjac.scenario import data_path
from gridjac.swing import CoiModel, find_equilibrium


@pytest.fixture(scope="session")
def wscc9_case():
    return RawCase.from_json(data_path("wscc9.json"))


@pytest.fixture(scope="session")
def wscc9_model(wscc9_case):
    return CoiModel.from_case(wscc9_case)


@pytest.fixture(scope="session")
def wscc9_equilibrium(wscc9_model):
    return find_equilibrium(wscc9_model)


@pytest.fixture(scope="session")
def ne39_case():
    return RawCase.from_json(data_path("newengland39.json"))


@pytest.fixture(scope="session")
def ne39_model(ne39_case):
    return CoiModel.from_case(ne39_case)


@pytest.fixture(scope="session")
def ne39_equilibrium(ne39_model):
    return find_equilibrium(ne39_model)


def two_machine_model(b=1.0, m=(1.0, 1.0), d=(1.0, 1.0), pm=0.5, sigma=0.01):
    """Lossless two-machine toy: Pe1 = b sin(d1 - d2)."""
    from gridjac.network import ReducedNetwork

    net = ReducedNetwork(G=np.zeros((2, 2)), B=np.array([[0.0, b], [b, 0.0]]),
                         E=np.ones(2))
    return CoiModel(net=net, M=np.array(m), D=np.array(d),
                    Pm=np.array([pm, -pm]), sigma=np.array([sigma, sigma]))


@pytest.fixture
def toy2():
    return two_machine_model()
