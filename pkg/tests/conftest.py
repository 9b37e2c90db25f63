import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gibbscp.encoding import AdicParams
from gibbscp.scenery import PairChain
from gibbscp.sft import Sft
from gibbscp.thermo import Potential, build_gibbs

settings.register_profile(
    "default", max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("default")

COUPLED = np.array([[0.3, 0.1, 0.1], [0.05, 0.15, 0.3]])


@pytest.fixture(autouse=True)
def _isolated_cache(tmp_path, monkeypatch):
    monkeypatch.setenv("GIBBSCP_CACHE_DIR", str(tmp_path / "cache"))


@pytest.fixture(scope="session")
def params23():
    return AdicParams.make(2, 3)


def pair_chain(potential, params=None):
    params = params or AdicParams.make(2, 3)
    return PairChain(build_gibbs(potential.sft, potential), params)


@pytest.fixture(scope="session")
def uniform_chain():
    return pair_chain(Potential.uniform(Sft.full(6)))


@pytest.fixture(scope="session")
def coupled_chain():
    return pair_chain(Potential.bernoulli(Sft.full(6), COUPLED.ravel()))


@pytest.fixture(scope="session")
def product_chain():
    return pair_chain(Potential.bernoulli(Sft.full(6), np.outer([0.9, 0.1], [1 / 3] * 3).ravel()))


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
