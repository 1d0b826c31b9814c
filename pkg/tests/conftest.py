import os
import sys

sys.path.insert(0, os.path.dirname(__file__))

import verdicts  # noqa: E402


def pytest_terminal_summary(terminalreporter):
    if not verdicts.LINES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(verdicts.LINES):
        terminalreporter.write_line(verdicts.LINES[number])
