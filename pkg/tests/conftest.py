"""Shared pytest hooks."""


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    # Replay the one-line verdicts from the acceptance suite in a single
    # block so a plain `pytest -v` run ends with every check visible.
    try:
        import test_acceptance
    except ImportError:
        return
    if test_acceptance.REPORT:
        terminalreporter.section("acceptance checks")
        for line in test_acceptance.REPORT:
            terminalreporter.write_line(line)
