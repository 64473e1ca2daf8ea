import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    failed = report.failed
    if report.when == "call" or failed:
        entry = _RESULTS.setdefault(number, {"title": title, "ok": True, "notes": []})
        entry["ok"] = entry["ok"] and not failed and not report.skipped
        if report.when == "call":
            entry["notes"].extend(v for k, v in item.user_properties if k == "detail")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        tr.write_line(f"{'PASS' if entry['ok'] else 'FAIL'}  criterion {number}: {entry['title']}")
        for note in entry["notes"]:
            for text in str(note).splitlines():
                tr.write_line(f"        {text}")
