import numpy as np
import pytest

from tev.assembly import RefractionField, assemble_forms
from tev.bfs import build_space
from tev.mesh import Domain, build_mesh, refine_uniform

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def square4_forms():
    space = build_space(build_mesh(Domain.UNIT_SQUARE, 4))
    return assemble_forms(space.layout(), RefractionField(16.0))


@pytest.fixture(scope="session")
def two_level_square():
    """(coarse space, fine space) on the unit square with 4 -> 8 divisions."""
    coarse = build_mesh(Domain.UNIT_SQUARE, 4)
    fine = refine_uniform(coarse)
    return build_space(coarse), build_space(fine)
