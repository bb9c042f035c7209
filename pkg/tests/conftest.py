import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rsma_leo.harness.scenario import generate_scenario
from rsma_leo.model import SystemConfig

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def config():
    return SystemConfig()


@pytest.fixture
def channels(config):
    return generate_scenario(config, 0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


VERDICTS = pytest.StashKey[list]()


@pytest.fixture
def verdict(request):
    """``verdict(n, ok, detail)`` prints one criterion line and keeps it for the summary."""
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(n, ok, detail):
        line = f"CRITERION {n:>2}: {'PASS' if ok else 'FAIL'} | {detail}"
        request.config.stash.setdefault(VERDICTS, []).append(line)
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        return ok

    return emit


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash.get(VERDICTS, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines):
            terminalreporter.write_line(line)
