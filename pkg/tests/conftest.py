import numpy as np
import pytest

from abc_misspec.models import Scenario
from abc_misspec.posterior import PosteriorDraws


@pytest.fixture
def normal_scenario():
    return Scenario()


def make_posterior(draws, weights=None, summaries=None, epsilon=1.0, method="AR", distances=None):
    draws = np.asarray(draws, dtype=float)
    m = draws.shape[0]
    w = np.ones(m) if weights is None else np.asarray(weights, dtype=float)
    return PosteriorDraws(draws, w, epsilon, 0.01, method, np.arange(m),
                          None if summaries is None else np.asarray(summaries, dtype=float), distances)


# one line per acceptance criterion, echoed in the terminal summary
ACCEPTANCE_LINES: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
