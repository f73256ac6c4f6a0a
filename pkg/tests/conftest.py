"""Shared pytest wiring: after the run, print one verdict line per
release-gate criterion recorded by test_acceptance."""

import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", ()) if module else ()
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
