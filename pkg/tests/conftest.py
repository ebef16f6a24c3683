import pytest

from bundleopt.dist import iid_model, make_marginal
from bundleopt.solver import solve_two_good

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def uniform():
    return make_marginal("uniform")


@pytest.fixture(scope="session")
def uniform_model(uniform):
    return iid_model(uniform)


@pytest.fixture(scope="session")
def uniform_opt(uniform_model):
    return solve_two_good(uniform_model, 1.0)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
