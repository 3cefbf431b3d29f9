import pytest
from hypothesis import HealthCheck, settings

from ranslice.config import ScenarioConfig

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)


@pytest.fixture
def small_cfg():
    """Desk scenario shortened for unit tests."""
    return ScenarioConfig(episode_windows=20, mobility_warmup_s=300.0, warmup_windows=5)
