import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.hookimpl(wrapper=True)
def pytest_runtest_makereport(item, call):
    # carry the acceptance-criterion label onto the report so the
    # summary hook below can print the checklist
    report = yield
    name = getattr(getattr(item, "function", None), "_criterion", None)
    if name is not None:
        report._criterion = name
    return report


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    results = {}
    for reports in terminalreporter.stats.values():
        for rep in reports:
            name = getattr(rep, "_criterion", None)
            if name is None or not hasattr(rep, "when"):
                continue
            ok = results.get(rep.nodeid, (name, True))[1]
            phase_ok = rep.passed if rep.when == "call" else not rep.failed
            results[rep.nodeid] = (name, ok and phase_ok)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(results):
        name, ok = results[nodeid]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")
