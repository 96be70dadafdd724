"""Collects acceptance outcomes and prints one line per criterion at the end of the run."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(tag, text): acceptance criterion covered by a test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    tag, text = mark.args
    prev = _RESULTS.get(tag, (True, text, 0.0))
    ok = prev[0] and not rep.failed
    _RESULTS[tag] = (ok, text, prev[2] + (rep.duration if rep.when == "call" else 0.0))


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for tag in sorted(_RESULTS, key=lambda t: [int(p) if p.isdigit() else p for p in t.replace(".", " ").split()]):
        ok, text, secs = _RESULTS[tag]
        tr.write_line(f"criterion {tag}: {'PASS' if ok else 'FAIL'}  {text}  ({secs:.2f} s)")
