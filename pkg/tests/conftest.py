import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from dtnmaxwell.meshgen import generate_shell_mesh

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def shell60():
    return generate_shell_mesh(0.1, 0.5, 1, 0)


@pytest.fixture(scope="session")
def shell_coarse():
    """The Example-1 starting mesh: two layers over a once-subdivided icosahedron."""
    return generate_shell_mesh(0.1, 0.5, 2, 1)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.fixture
def acceptance_log(request):
    """Collects one status line per acceptance criterion for the terminal summary."""
    return request.config.stash[_LINES].append


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
