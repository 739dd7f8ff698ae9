import sys


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    """Echo the acceptance checklist after the run, outside output capture."""
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "CHECKLIST", None) if mod else None
    if not lines:
        return
    terminalreporter.write_sep("-", "acceptance checklist")
    for line in lines:
        terminalreporter.write_line(line)
