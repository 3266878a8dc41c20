import pytest

_ACCEPT = {}


@pytest.fixture
def record(request):
    """Attach a one-line detail string to an acceptance test."""
    def put(detail: str):
        _ACCEPT.setdefault(request.node.nodeid, {})["detail"] = detail
    return put


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    rep = (yield).get_result()
    crit = item.get_closest_marker("criterion")
    if crit is None:
        return
    entry = _ACCEPT.setdefault(item.nodeid, {})
    entry["crit"] = crit.args[0]
    if rep.when == "setup" and rep.skipped:
        entry["outcome"] = "SKIP"
    elif rep.when == "call":
        entry["outcome"] = "PASS" if rep.passed else ("SKIP" if rep.skipped else "FAIL")


def pytest_terminal_summary(terminalreporter):
    rows = sorted((e for e in _ACCEPT.values() if "outcome" in e), key=lambda e: e["crit"])
    if not rows:
        return
    terminalreporter.section("acceptance criteria")
    for e in rows:
        terminalreporter.write_line(f"criterion {e['crit']:>2}: {e['outcome']}  {e.get('detail', '')}")
