import numpy as np
import pytest

from proxima.basis import design_matrix, intercept
from proxima.data import FittingSet


def linear_terms(D):
    return [intercept(D)] + [tuple(int(e == d) for e in range(D)) for d in range(D)]


def make_linear_data(rng, N, D, beta=None, noise=0.1, terms=None):
    terms = terms or linear_terms(D)
    X = rng.uniform(-1, 1, (N, D))
    if beta is None:
        beta = rng.normal(size=len(terms))
    y = design_matrix(terms, X) @ beta + rng.normal(0, noise, N)
    return FittingSet(X, y), np.asarray(beta), terms


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


# filled by test_acceptance.py, one line per criterion
ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[n])
