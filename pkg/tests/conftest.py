import numpy as np
import pytest

from fieldcomp.simulator import ScenarioConfig, TrapScenario


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def axis_scenario():
    """Beam along x, identity coupling, stray field (5, 0, 0): beam-1 plane is x = -5."""
    beams = [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    return TrapScenario(beams, np.eye(3), [5.0, 0.0, 0.0], noise_sigma=0.0)


@pytest.fixture
def default_config():
    return ScenarioConfig()


_ACCEPTANCE = []


@pytest.fixture(scope="session")
def acceptance_log():
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(_ACCEPTANCE, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
