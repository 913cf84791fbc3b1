import math

import numpy as np
import pytest

from steklov_layer.geometry import make_curve


@pytest.fixture(scope="session")
def disk():
    return make_curve("disk", [1.0])


@pytest.fixture(scope="session")
def ellipse():
    return make_curve("ellipse", [1.3, 0.8])


@pytest.fixture(scope="session")
def trefoil():
    # r(theta) = 1 + 0.1 cos(3 theta)
    return make_curve("fourier", [1.0, 0.0, 0.0, 0.0, 0.0, 0.1, 0.0])


@pytest.fixture
def rng():
    return np.random.default_rng(0x5EED)


def simpson(f, a, b, tol=1e-12):
    """Adaptive Simpson quadrature, written out as a reference."""
    def step(a, b, fa, fm, fb, whole, tol, depth):
        m = 0.5 * (a + b)
        lm, rm = 0.5 * (a + m), 0.5 * (m + b)
        flm, frm = f(lm), f(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth > 50 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return step(a, m, fa, flm, fm, left, tol / 2, depth + 1) + \
            step(m, b, fm, frm, fb, right, tol / 2, depth + 1)

    fa, fb, fm = f(a), f(b), f(0.5 * (a + b))
    return step(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, 0)


PI = math.pi


ACCEPTANCE_LINES = []


def record(criterion, ok, detail):
    """Log one acceptance verdict; also printed for ``pytest -s`` runs."""
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
