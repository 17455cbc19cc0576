"""Acceptance reporting: one status line per criterion at the end of the run.

Acceptance tests carry ``@pytest.mark.criterion(id, title)`` and may attach a
one-line ``detail`` via ``record_property``. Skips whose reason starts with
``external:`` are reported as SKIPPED-EXTERNAL.
"""
import pytest

EXTERNAL = "external:"
_outcomes: dict[str, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _outcomes.setdefault(item.nodeid, {"id": marker.args[0], "title": marker.args[1],
                                               "status": "PASS", "detail": ""})
    detail = dict(item.user_properties).get("detail")
    if detail:
        entry["detail"] = detail
    if report.skipped:
        reason = report.longrepr[2] if isinstance(report.longrepr, tuple) else str(report.longrepr)
        reason = reason.removeprefix("Skipped: ")
        entry["status"] = "SKIPPED-EXTERNAL" if reason.startswith(EXTERNAL) else "SKIPPED"
        entry["detail"] = entry["detail"] or reason.removeprefix(EXTERNAL).strip()
    elif report.failed:
        entry["status"] = "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for entry in sorted(_outcomes.values(), key=lambda e: str(e["id"])):
        line = f"criterion {entry['id']} ({entry['title']}): {entry['status']}"
        if entry["detail"]:
            line += f" -- {entry['detail']}"
        tr.write_line(line)
