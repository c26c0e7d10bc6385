import pytest

from hetq.model import SystemParams
from hetq.subpolicy import cd_blocking


@pytest.fixture
def base_params():
    return SystemParams(lambda_tau=4.0, mu_tau=8.0, rho_eps=0.4)


@pytest.fixture
def base_levels():
    """Blocking of CD-(1,5) and CD-(0,5) at rho_eps = 0.4."""
    return cd_blocking(1.0, 5, 0.4), 1.0


def pytest_terminal_summary(terminalreporter):
    import sys

    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
