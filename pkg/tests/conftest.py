import numpy as np
import pytest

from gridloss import GridTensor

# Filled by test_acceptance.py; printed once at the end of the session.
ACCEPTANCE_RESULTS: dict = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        ok, title, detail = ACCEPTANCE_RESULTS[key]
        status = "PASS" if ok else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {key:2d}: {title} ({detail})")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def grid(values) -> GridTensor:
    """Tensor from nested lists of rank 4."""
    return GridTensor(np.asarray(values, dtype=np.float64))


def scalar(t: GridTensor) -> float:
    return t.item()
