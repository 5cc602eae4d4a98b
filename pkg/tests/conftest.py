import importlib

import numpy as np
import pytest

from sbw import _pykernels

try:
    _cykernels = importlib.import_module("sbw._kernels")
except ImportError:  # extension not built
    _cykernels = None

BACKENDS = [pytest.param(_pykernels, id="python")]
BACKENDS.append(
    pytest.param(_cykernels, id="cython", marks=pytest.mark.skipif(_cykernels is None, reason="extension not built"))
)


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)


def direct_utility(costs, purchases, reward, node):
    """Plain-Python utility, independent of sbw.game (used as an oracle)."""
    totals = [sum(row) for row in purchases]
    grand = sum(totals)
    share = reward * totals[node] / grand if grand > 0 else 0.0
    return share - sum(c * q for c, q in zip(costs[node], purchases[node]))


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def criterion(request):
    """Record a PASS/FAIL line for the acceptance summary, then assert."""

    def check(label: str, ok: bool, detail: str = "") -> None:
        line = f"{'PASS' if ok else 'FAIL'} {label}" + (f": {detail}" if detail else "")
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return check


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
