import pytest

from noisypbc.blocks import build_blocks
from noisypbc.equilibria import analyze_map
from noisypbc.maps import builtin_map
from noisypbc.thresholds import analyze_thresholds


@pytest.fixture(scope="session")
def piecewise():
    return builtin_map("piecewise")


@pytest.fixture(scope="session")
def ricker2():
    return builtin_map("ricker2")


@pytest.fixture(scope="session")
def ricker3():
    return builtin_map("ricker3")


@pytest.fixture(scope="session")
def ricker4():
    return builtin_map("ricker4")


@pytest.fixture(scope="session")
def piecewise_analysis(piecewise):
    return analyze_map(piecewise)


@pytest.fixture(scope="session")
def ricker2_analysis(ricker2):
    return analyze_map(ricker2)


@pytest.fixture(scope="session")
def ricker3_analysis(ricker3):
    return analyze_map(ricker3)


@pytest.fixture(scope="session")
def ricker4_analysis(ricker4):
    return analyze_map(ricker4)


@pytest.fixture(scope="session")
def piecewise_report(piecewise, piecewise_analysis):
    return analyze_thresholds(piecewise, piecewise_analysis, beta=0.58)


@pytest.fixture(scope="session")
def piecewise_blocks(piecewise, piecewise_analysis):
    return build_blocks(piecewise, piecewise_analysis)


ACCEPTANCE_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request):
    """Record one PASS/FAIL line for an acceptance criterion; lines are repeated in the terminal summary."""
    lines = request.config.stash.setdefault(ACCEPTANCE_KEY, [])

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
        lines.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(ACCEPTANCE_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
