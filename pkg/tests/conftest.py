import numpy as np
import pytest

from mpssm.graphcore import build_gso, clique_chain, gen_gpp_dataset, gen_graph


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def path3():
    return gen_graph("path", n=3)


@pytest.fixture
def k3():
    return gen_graph("cycle", n=3)


@pytest.fixture(scope="session")
def chain():
    """clique_chain(6, 10): 65 nodes, 280 edges."""
    return clique_chain(6, 10)


@pytest.fixture
def er_graph():
    return gen_graph("erdos_renyi", n=12, p=0.3, seed=7, require_connected=True)


@pytest.fixture
def er_gso(er_graph):
    return build_gso(er_graph)


@pytest.fixture(scope="session")
def diameter_dataset():
    return gen_gpp_dataset("diameter", 20, n_range=(6, 9), seed=3)


@pytest.fixture(scope="session")
def eccentricity_dataset():
    return gen_gpp_dataset("eccentricity", 12, n_range=(5, 8), seed=4)
