import re

_CRITERION = re.compile(r"test_criterion_(\d+)_(\w+)")
_results = {}


def pytest_runtest_logreport(report):
    m = _CRITERION.search(report.nodeid)
    if not m:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        detail = dict(report.user_properties).get("detail", "")
        _results[int(m.group(1))] = (m.group(2), report.outcome, detail)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_results):
        name, outcome, detail = _results[num]
        status = "PASS" if outcome == "passed" else "FAIL"
        line = f"criterion {num:2d} {name:<28} {status}"
        terminalreporter.write_line(f"{line}  {detail}" if detail else line)
