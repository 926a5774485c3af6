import numpy as np
import pytest
from hypothesis import settings

from diqre import behaviour, digp, game

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")

# canonical order (c_chsh, c_align, c_0)
IDEAL_CHSH = np.array([(2 + np.sqrt(2)) / 8, 0.5, (2 - np.sqrt(2)) / 8])
INTERIOR_CHSH = np.array([0.4225, 0.49, 0.0875])


@pytest.fixture(scope="session")
def chsh():
    return game.make_chsh_extended()


@pytest.fixture(scope="session")
def ideal_cert(chsh):
    return digp.dual_certificate(chsh, 1, 2, 2, IDEAL_CHSH)


@pytest.fixture(scope="session")
def interior_cert(chsh):
    return digp.dual_certificate(chsh, 1, 2, 2, INTERIOR_CHSH)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def ideal_behaviour():
    return behaviour.ideal_chsh_behaviour()


# one line per acceptance criterion, printed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
