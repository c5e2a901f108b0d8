"""Collects one PASS/FAIL line per acceptance criterion and prints them at the end of the run."""

import pytest

_LINES = pytest.StashKey[list]()


def pytest_configure(config):
    config.stash[_LINES] = []


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    report = yield
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return report
    skipped_early = report.when == "setup" and report.skipped
    if report.when == "call" or skipped_early:
        number, title = marker.args
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        line = f"criterion {number}: {status}  {title}  ({call.duration:.1f} s)"
        if detail:
            line += f"  [{detail}]"
        item.config.stash[_LINES].append(line)
    return report


def pytest_terminal_summary(terminalreporter, config):
    lines = config.stash[_LINES]
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
