import sys
from pathlib import Path

import pytest

# make the shared oracles importable as a plain module
sys.path.insert(0, str(Path(__file__).parent))

# (criterion id, title, status, detail) collected from tests marked ``criterion``
_ACCEPTANCE = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion checked by this test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if hasattr(rep, "wasxfail") or rep.passed:
            status = "PASS" if rep.passed else "FAIL"
        else:
            status = "FAIL"
        detail = "; ".join(f"{k}={v}" for k, v in item.user_properties)
        if hasattr(rep, "wasxfail") and not rep.passed:
            detail += f" [expected failure: {rep.wasxfail}]"
        _ACCEPTANCE.append((marker.args[0], marker.args[1], status, detail))


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid, title, status, detail in sorted(_ACCEPTANCE, key=lambda r: r[0]):
        tr.write_line(f"criterion {cid} {status}: {title} | {detail}")
    # criteria with sub-parts (5a..5e) also get one combined line
    parents = {}
    for cid, _, status, _ in _ACCEPTANCE:
        if cid[-1].isalpha():
            parents.setdefault(cid[:-1], []).append((cid, status))
    for pid, parts in sorted(parents.items()):
        failed = [c for c, s in parts if s != "PASS"]
        status = "PASS" if not failed else "FAIL"
        tr.write_line(f"criterion {pid} {status}: all parts" + (f" (failing: {', '.join(sorted(failed))})" if failed else ""))
