import pytest

from mvvar.market_model import MarketParams, Preference
from mvvar.var_risk import RiskSpec

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def table1():
    return MarketParams(mu=0.05, sigma=0.3, alpha=0.01, beta=0.14, rho=0.2)


@pytest.fixture
def table2():
    return MarketParams(mu=0.8, sigma=0.02, alpha=0.01, beta=0.14, rho=0.2)


@pytest.fixture
def pref():
    return Preference(gamma=1.0, T=10.0, x0=1.0)


@pytest.fixture
def risk():
    return RiskSpec(p=0.01, tau=1.0 / 260.0, var_cap=0.02)


@pytest.fixture
def acceptance_line():
    def record(criterion: str, ok: bool, detail: str = ""):
        line = f"[{'PASS' if ok else 'FAIL'}] {criterion}" + (f" :: {detail}" if detail else "")
        _ACCEPTANCE_LINES.append(line)
        print(line)
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
