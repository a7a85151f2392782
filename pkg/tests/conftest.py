import numpy as np
import pytest

from irgcn.graph import HeteroGraph, RelationSchema


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def toy_graph():
    """Two types (user: 3 nodes, item: 4 nodes) and two relations."""
    return HeteroGraph(
        ["user", "item"],
        [["u0", "u1", "u2"], ["i0", "i1", "i2", "i3"]],
        [RelationSchema("likes", 0, 1), RelationSchema("follows", 0, 0)],
        [np.array([[0, 0], [0, 1], [1, 2], [2, 3], [2, 0]]), np.array([[0, 1], [1, 2]])],
    )


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)
