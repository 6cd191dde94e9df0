"""Per-criterion summary for the acceptance module.

Tests tagged ``@pytest.mark.criterion(n, "title")`` are grouped and the
terminal summary prints one PASS/FAIL line per criterion.
"""
from collections import defaultdict

import pytest

_TITLES = {}
_RESULTS = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion tag")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n = mark.args[0]
    if len(mark.args) > 1:
        _TITLES[n] = mark.args[1]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        _RESULTS[n].append((item.name, rep.passed, rep.skipped, dict(item.user_properties)))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_RESULTS):
        res = _RESULTS[n]
        failed = [name for name, ok, skipped, _ in res if not ok and not skipped]
        status = "FAIL" if failed else "PASS"
        tr.write_line(f"criterion {n} {status}: {_TITLES.get(n, '')} "
                      f"({len(res) - len(failed)}/{len(res)} checks)")
        for name, ok, skipped, props in res:
            if props:
                detail = ", ".join(f"{k}={v}" for k, v in props.items())
                tr.write_line(f"    {name}: {detail}")
        for name in failed:
            tr.write_line(f"    failed: {name}")
