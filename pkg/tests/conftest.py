import math

import numpy as np
import pytest
from scipy import integrate


def semicircle_quad(f, **kw):
    """int f(lambda) dmu_sc(lambda) with lambda = 2 sin(theta)."""
    g = lambda th: f(2 * math.sin(th)) * (2 / math.pi) * math.cos(th) ** 2
    val, _ = integrate.quad(g, -math.pi / 2, math.pi / 2, epsabs=1e-13, epsrel=1e-13,
                            limit=400, **kw)
    return val


@pytest.fixture
def rng():
    return np.random.default_rng(20261015)


ACCEPTANCE: dict = {}


def report(number: int, passed: bool, detail: str) -> None:
    """Record one acceptance line; printed now and again in the terminal summary."""
    line = f"CRITERION {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
