import pytest

from sensoradapt.config import load_config
from sensoradapt.harness import build_field


@pytest.fixture(scope="session")
def single_cfg():
    return load_config("single")


@pytest.fixture(scope="session")
def two_cfg():
    return load_config("two")


@pytest.fixture(scope="session")
def single_field(single_cfg):
    field, reports = build_field(single_cfg)
    return field, reports


@pytest.fixture(scope="session")
def two_field(two_cfg):
    field, reports = build_field(two_cfg)
    return field, reports


ACCEPTANCE = {}


@pytest.fixture
def verdict(request):
    """Record a one-line acceptance verdict for the terminal summary."""

    def record(criterion, passed, detail, seconds=None):
        line = f"criterion {criterion:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
        if seconds is not None:
            line += f"  [{seconds:.2f}s]"
        ACCEPTANCE[criterion] = line
        print(line)

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[k])
