import sys


def pytest_terminal_summary(terminalreporter):
    # pytest captures fd 1 during tests, so repeat the acceptance lines here
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance")
    for n in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[n])
