import numpy as np
import pytest
from hypothesis import settings

from sompns import Dictionary, generate_gaussian_dictionary

settings.register_profile("default", max_examples=40, deadline=None)
settings.load_profile("default")


_ACCEPTANCE_LINES = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Append ``(criterion, passed, detail)``; printed in the terminal summary."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for name, passed, detail in sorted(_ACCEPTANCE_LINES, key=lambda r: r[0]):
        terminalreporter.write_line(f"{'PASS' if passed else 'FAIL'}  {name}: {detail}")


@pytest.fixture
def gauss_8x16():
    return generate_gaussian_dictionary(8, 16, 3)


@pytest.fixture
def identity4():
    return Dictionary(np.eye(4))


def brute_coherence(a):
    n = a.shape[1]
    best = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                best = max(best, abs(float(np.dot(a[:, i], a[:, j]))))
    return best
