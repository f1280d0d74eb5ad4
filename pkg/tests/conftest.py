import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k, text): acceptance criterion number and summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    k, text = mark.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        status = "PASS" if rep.outcome == "passed" else "FAIL"
        detail = ""
        if status == "FAIL" and rep.longrepr is not None:
            detail = str(getattr(rep.longrepr, "reprcrash", None) and rep.longrepr.reprcrash.message or "")
            detail = detail.splitlines()[0] if detail else ""
        _CRITERIA[k] = (status, text, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, text, detail = _CRITERIA[k]
        line = f"criterion {k:2d}: {status}  {text}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
