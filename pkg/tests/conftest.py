import numpy as np
import pytest

from unicon.numerics import finite_difference_gradient, rel_error

# one line per acceptance criterion, echoed after the test summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def gradcheck(f, analytic, x, h=1e-6, tol=1e-5, atol=1e-8):
    """Compare an analytic gradient against central finite differences.

    atol short-circuits the relative comparison when the absolute difference
    is already at finite-difference noise level (true gradient ~ 0).
    """
    fd = finite_difference_gradient(f, x, h=h)
    analytic = np.asarray(analytic)
    if np.abs(analytic - fd).max(initial=0.0) < atol:
        return 0.0
    err = rel_error(analytic, fd)
    assert err < tol, f"gradient mismatch: rel err {err:.3e} >= {tol:g}"
    return err


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
