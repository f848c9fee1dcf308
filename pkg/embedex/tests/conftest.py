"""Replays extractor acceptance lines in the terminal summary."""

import pytest

ACCEPTANCE_LINES = []


@pytest.fixture
def criterion():
    """Print one PASS/FAIL line for an acceptance criterion, then assert."""

    def record(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, f"{name}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("extractor acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
