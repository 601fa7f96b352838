import numpy as np
import pytest

from poisim import _kernels
from poisim.scenario import RoomSpec


@pytest.fixture
def room():
    return RoomSpec()


@pytest.fixture(params=list(_kernels.BACKENDS))
def backend(request):
    return _kernels.get_backend(request.param)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, filled in by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
