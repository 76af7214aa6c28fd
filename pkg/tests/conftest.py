import sys

import numpy as np
import pytest

from homogen.cell import solve_cell
from homogen.coefficients import CoefficientSpec
from homogen.fields import build_grid, sample_coefficient_set


def cell_of(spec, n=16, offset=0.0):
    coeff = sample_coefficient_set(spec, build_grid(n, 1.0, offset))
    return coeff, solve_cell(coeff)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def laminate_cell():
    return cell_of(CoefficientSpec.laminate().with_nu("laminate", mean=2.0, amplitude=1.0))


@pytest.fixture(scope="session")
def trig_cell():
    return cell_of(CoefficientSpec.trigonometric(seed=1).with_nu("laminate", axis=1), n=16)


def pytest_terminal_summary(terminalreporter):
    acceptance = sys.modules.get("test_acceptance")
    lines = getattr(acceptance, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for key in sorted(lines):
            terminalreporter.write_line(lines[key])
