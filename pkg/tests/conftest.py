import time

import pytest

_LINES_KEY = pytest.StashKey[list]()


@pytest.fixture
def criterion(request, capsys):
    """Reporter for acceptance tests: prints one PASS/FAIL line and fails on FAIL.

    The wall-clock budget (seconds) is part of the verdict when given.
    """
    lines = request.config.stash.setdefault(_LINES_KEY, [])
    started = time.perf_counter()

    def report(name, ok, detail, budget=None):
        secs = time.perf_counter() - started
        timing = f"{secs:.1f}s" if budget is None else f"{secs:.1f}s of {budget:.0f}s"
        ok = bool(ok) and (budget is None or secs < budget)
        line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail} [{timing}]"
        lines.append(line)
        with capsys.disabled():
            print("\n" + line)
        assert ok, line

    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    lines = config.stash.get(_LINES_KEY, [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
