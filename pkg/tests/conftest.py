"""Shared fixtures and the acceptance-criteria summary hook."""

import pytest

_CRITERIA = {}


@pytest.fixture(scope="session")
def criterion_record():
    """Collect one (status, detail) entry per acceptance criterion."""

    def record(number, status, detail):
        _CRITERIA[number] = (status, detail)

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        status, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:2d}: {status} - {detail}")
