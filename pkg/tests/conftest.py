import re

import pytest

_CRITERION = re.compile(r"test_criterion_(\d+)")
_results: dict[int, dict] = {}


def pytest_collection_modifyitems(items):
    for item in items:
        m = _CRITERION.search(item.name)
        if m:
            doc = (item.function.__doc__ or item.name).strip().splitlines()[0]
            _results[int(m.group(1))] = {"title": doc, "outcome": "NOT RUN", "duration": 0.0}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = _CRITERION.search(item.name)
    if not m:
        return
    entry = _results[int(m.group(1))]
    if rep.when == "call" or rep.failed or rep.skipped:
        if rep.failed:
            entry["outcome"] = "FAIL"
        elif rep.skipped:
            entry["outcome"] = "SKIP"
        elif entry["outcome"] != "FAIL":
            entry["outcome"] = "PASS"
        entry["duration"] += rep.duration


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        e = _results[n]
        terminalreporter.write_line(f"criterion {n:2d}: {e['outcome']:<4} {e['duration']:7.2f}s  {e['title']}")
