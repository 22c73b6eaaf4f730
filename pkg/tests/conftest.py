import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=40,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE = []


@pytest.fixture
def criterion():
    """Record ``(number, label, passed, detail)`` for the acceptance summary."""

    def record(number, label, passed, detail=""):
        line = f"criterion {number:2d} [{'PASS' if passed else 'FAIL'}] {label}"
        if detail:
            line += f" :: {detail}"
        _ACCEPTANCE.append((number, line))
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE):
        terminalreporter.write_line(line)
