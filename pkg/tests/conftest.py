import math

import numpy as np
import pytest

from hypb.table import Table, build_optimal_table


@pytest.fixture(scope="session")
def optimal_01():
    return build_optimal_table(-1.0, 0.1)


@pytest.fixture(scope="session")
def optimal_001():
    return build_optimal_table(-1.0, 0.01)


@pytest.fixture(scope="session")
def spiral_01():
    from hypb.spiral import build_spiral_table
    return build_spiral_table(-1.0, 0.1)


def transform_table(t: Table, theta: float = 0.0, shift=(0.0, 0.0), reflect: bool = False) -> Table:
    """Image of a table under an isometry; a reflection (x -> -x) also reverses the boundary order."""
    c, s = math.cos(theta), math.sin(theta)
    R = np.array([[c, -s], [s, c]])
    if reflect:
        R = R @ np.diag([-1.0, 1.0])
    sh = np.asarray(shift, float)
    geom = t.geom.copy()
    kind = t.kind.copy()
    for i in range(t.n_pieces):
        g = t.geom[i]
        if kind[i] == 0:
            a, b = R @ g[0:2] + sh, R @ g[2:4] + sh
            geom[i, :4] = np.r_[b, a] if reflect else np.r_[a, b]
        else:
            geom[i, 0:2] = R @ g[0:2] + sh
            if reflect:
                # end angle of the original becomes the start angle, sweep keeps its sign
                th1 = g[3] + g[4]
                geom[i, 3] = math.pi - th1 + theta
            else:
                geom[i, 3] = g[3] + theta
    order = np.arange(t.n_pieces)[::-1] if reflect else np.arange(t.n_pieces)
    return Table(kind[order], geom[order], t.label[order], t.corridor_of[order], [], t.family, dict(t.params))


def global_s_of_point(t: Table, p, tol=1e-9) -> float:
    for i in range(t.n_pieces):
        pc = t.piece(i)
        if pc.distance(p) < tol:
            return float(t.offsets[i] + pc.locate(p))
    raise AssertionError(f"{p} is not on the boundary")


ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
