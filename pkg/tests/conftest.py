import numpy as np
import pytest

ACCEPTANCE: dict = {}


@pytest.fixture
def record():
    """Record a per-criterion outcome for the acceptance summary."""

    def _record(criterion: int, ok: bool):
        ACCEPTANCE[criterion] = ACCEPTANCE.get(criterion, True) and bool(ok)
        return ok

    return _record


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ACCEPTANCE[k] else 'FAIL'}")
