import numpy as np
import pytest
from hypothesis import strategies as st

from momentforge.poly import Polynomial, monomials_up_to, parse_poly, parse_system

X1 = ("x",)
XY = ("x", "y")
ONEDIM_G = "x*(1-x)*(x-2)^2"
DISK_G = "1-(x-1)^2-y^2"
DISK_H = "1-x^2-(y-1)^2"


@pytest.fixture
def onedim():
    return parse_system([ONEDIM_G], X1)


@pytest.fixture
def disks():
    return parse_system([DISK_G, DISK_H], XY)


@pytest.fixture
def unit_disk():
    return parse_system(["1-x^2-y^2"], XY)


def P(text, names=XY):
    return parse_poly(text, names)


coefficients = st.floats(-10, 10, allow_nan=False, allow_infinity=False)


@st.composite
def polynomials(draw, n=None, max_degree=4, max_n=3):
    n = draw(st.integers(1, max_n)) if n is None else n
    deg = draw(st.integers(0, max_degree))
    mons = monomials_up_to(n, deg)
    chosen = draw(st.lists(st.sampled_from(mons), min_size=1, max_size=min(len(mons), 8), unique=True))
    return Polynomial(n, {a: draw(coefficients) for a in chosen})


def points(n, lo=-2.0, hi=2.0):
    return st.lists(st.floats(lo, hi, allow_nan=False), min_size=n, max_size=n).map(np.array)


#: filled by test_acceptance; printed once at the end of the run
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
