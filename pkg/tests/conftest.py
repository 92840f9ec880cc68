import pytest

from helpers import ACCEPTANCE_LINES, ieee30_problems

from unimodal_drcc.master import solve_drcc


@pytest.fixture(scope="session")
def ieee30_solved():
    """Network, reserve costs and ``{kind: (problem, report)}`` for D1-D5."""
    net, cr, problems = ieee30_problems()
    return net, cr, {k: (p, solve_drcc(p)) for k, p in problems.items()}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
