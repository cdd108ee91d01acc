import numpy as np
import pytest

from ergolab.generator import build_generator
from ergolab.scenario import LogPower, Power, Quadratic, build_scenario


@pytest.fixture(scope="session")
def ou():
    return build_scenario(Quadratic(1.0))


@pytest.fixture(scope="session")
def ou_gen(ou):
    return build_generator(ou, 4096)


@pytest.fixture(scope="session")
def ou_small(ou):
    return build_generator(ou, 1024)


@pytest.fixture(scope="session")
def ou_wide():
    """OU on [-16, 16]: resolves moments of x^2 up to order 30."""
    return build_scenario(Quadratic(1.0)).with_radius(16.0)


@pytest.fixture(scope="session")
def logpower2():
    return build_scenario(LogPower(2.0))


@pytest.fixture(scope="session")
def power3():
    return build_scenario(Power(3.0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance criteria record one line each; printed at the end of the run
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        name, ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {k}. {name}: {detail}")
