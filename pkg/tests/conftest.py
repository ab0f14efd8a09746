import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from nfirs.config import ScenarioConfig

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def desk():
    return ScenarioConfig()


@pytest.fixture(scope="session")
def small():
    """Reduced scenario used by the FIM and chain oracles."""
    return ScenarioConfig(n_y=4, n_z=4, n_t=8, n_b=8, q=8, t_a=8, p=8, n_paths=2,
                          g_z=40, g_y=40, g_u=120)


def crandn(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2)


# one verdict line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
