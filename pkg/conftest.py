"""Replay acceptance-criterion verdict lines in the terminal summary.

The acceptance tests print one "ACCEPTANCE n ...: PASS" line each, but
pytest captures stdout of passing tests.  This hook lifts those lines out
of the captured output so every run ends with the full verdict list.
"""


def pytest_terminal_summary(terminalreporter):
    lines, seen = [], set()
    for reports in terminalreporter.stats.values():
        for report in reports:
            for line in getattr(report, "capstdout", "").splitlines():
                if line.startswith("ACCEPTANCE") and line not in seen:
                    seen.add(line)
                    lines.append(line)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
