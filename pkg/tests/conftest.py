import numpy as np
import pytest

from conservative_rom.fem import BoundarySpec, Discretization
from conservative_rom.mesh import build_structured_unit_square
from conservative_rom.tree import TreeSolver, build_forest

ALL_SIDES = ("bottom", "top", "left", "right")

_acceptance_lines: list[str] = []


def record_acceptance(number: int, title: str, passed: bool, detail: str) -> None:
    line = f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {title} -- {detail}"
    print(line)
    _acceptance_lines.append(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)


def make_tree(n_x, n_y=None, roots=1, bc=None):
    """Discretization and tree solver on an n_x x n_y square."""
    mesh = build_structured_unit_square(n_x, n_y or n_x)
    bc = bc or BoundarySpec(ALL_SIDES)
    disc = Discretization(mesh, bc)
    return disc, TreeSolver(disc.B, disc.dofmap, build_forest(mesh, bc, roots))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
