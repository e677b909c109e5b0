"""Per-criterion PASS/FAIL lines for the acceptance module."""

from collections import defaultdict

import pytest

_OUTCOMES = defaultdict(list)
_TITLES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or (rep.when != "call" and not (rep.skipped or rep.failed)):
        return
    number, title = mark.args
    _TITLES[number] = title
    if hasattr(rep, "wasxfail"):
        status = "XFAIL"
    elif rep.skipped:
        status = "SKIP"
    elif rep.failed:
        status = "FAIL"
    else:
        status = "PASS"
    details = [v for k, v in item.user_properties if k == "detail"]
    _OUTCOMES[number].append((status, item.name, details))


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        results = _OUTCOMES[number]
        statuses = {s for s, _, _ in results}
        if statuses & {"FAIL", "XFAIL"}:
            verdict = "FAIL"
        elif statuses == {"SKIP"}:
            verdict = "SKIPPED"
        else:
            verdict = "PASS"
        n_pass = sum(s == "PASS" for s, _, _ in results)
        tr.write_line(f"criterion {number}: {verdict}  {_TITLES[number]}  ({n_pass}/{len(results)} checks passed)")
        for status, name, details in results:
            if status != "PASS" or details:
                note = "; ".join(details)
                tr.write_line(f"    {status:5s} {name}{': ' + note if note else ''}")
