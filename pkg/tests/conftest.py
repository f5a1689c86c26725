CRITERIA_LINES = []


def report(number, ok, detail):
    """Record a one-line acceptance verdict and fail the calling test if it did not hold."""
    line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    assert ok, line


def pytest_terminal_summary(terminalreporter):
    if CRITERIA_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
