import numpy as np
import pytest

from dbartau.geometry import cached_grid, disk, ellipse, union
from dbartau.nls import NLSScenario, beta_constant


@pytest.fixture(scope="session")
def nls_base():
    return NLSScenario(disk(1j, 0.5), beta_constant(1.0), x=0.3, t=0.1)


@pytest.fixture(scope="session")
def two_disk_domain():
    return union(disk(0.3 + 1j, 0.5), disk(-0.5 - 0.9j, 0.4))


@pytest.fixture(scope="session")
def two_disk_grid(two_disk_domain):
    return cached_grid(two_disk_domain, 16, 32)


@pytest.fixture(scope="session")
def ellipse_scenario():
    return NLSScenario(ellipse(0.5, 0.25, 1j), beta_constant(1.0), x=0.2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


_VERDICTS = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_VERDICTS] = []


@pytest.fixture
def verdict(request):
    """Record and print one ``[PASS]``/``[FAIL]`` line; returns the flag for asserting."""

    def record(label: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        print(line)
        request.config.stash[_VERDICTS].append(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
