"""Collects acceptance outcomes and prints one line per criterion after the run."""

import pytest

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    entry = _CRITERIA.setdefault(number, {"title": title, "ok": True, "seen": False, "detail": ""})
    if report.failed or report.skipped:
        entry["ok"] = False
    if report.when == "call":
        entry["seen"] = True
        details = [str(v) for k, v in item.user_properties if k == "measured"]
        entry["detail"] = "; ".join(details)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        entry = _CRITERIA[number]
        status = "PASS" if entry["ok"] and entry["seen"] else "FAIL"
        line = f"criterion {number:2d}  {status}  {entry['title']}"
        if entry["detail"]:
            line += f"  [{entry['detail']}]"
        terminalreporter.write_line(line)
