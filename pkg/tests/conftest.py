import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when not in ("setup", "call"):
        return
    num, title = mark.args
    if rep.when == "setup" and not rep.failed:
        return
    entry = _CRITERIA.setdefault(num, {"title": title, "failed": False, "details": []})
    entry["failed"] |= rep.failed
    entry["details"] += [str(v) for k, v in item.user_properties if k == "detail"]


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_CRITERIA):
        entry = _CRITERIA[num]
        status = "FAIL" if entry["failed"] else "PASS"
        detail = "; ".join(entry["details"])
        line = f"[{status}] criterion {num}: {entry['title']}"
        terminalreporter.write_line(line + (f" ({detail})" if detail else ""))
