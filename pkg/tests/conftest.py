import numpy as np
import pytest
from hypothesis import settings

from ionspec.chain import CouplingMatrix, TrapConfig, chain_couplings, power_law_couplings

settings.register_profile("default", deadline=None, max_examples=40)
settings.load_profile("default")


def random_couplings(rng: np.random.Generator, n: int, scale: float = 1.0) -> CouplingMatrix:
    m = np.triu(rng.uniform(-scale, scale, (n, n)), 1)
    return CouplingMatrix(m + m.T)


@pytest.fixture(scope="session")
def chain8():
    return chain_couplings(TrapConfig(8, 4.8, 1.0))[1]


@pytest.fixture(scope="session")
def chain5():
    return chain_couplings(TrapConfig(5, 4.8, 1.0))[1]


@pytest.fixture(scope="session")
def pl8():
    return power_law_couplings(8, 1.0, 1.0)


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
