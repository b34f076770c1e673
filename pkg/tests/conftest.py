import pytest

CRITERIA = {
    "C1": "duality suite",
    "C2": "oracle cross-validation",
    "C3": "1->p sketch contract",
    "C4": "2->p low-rank pipeline",
    "C5": "block-column no-overestimate",
    "C6": "block-row sketch",
    "C7": "Khintchine check",
    "C8": "separation suite",
    "C9": "distinguisher monotonicity",
    "C10": "streaming/merge algebra",
}


def pytest_configure(config):
    config._acceptance = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker and report.failed:
        cid = marker.args[0]
        _, detail = item.config._acceptance.get(cid, (True, ""))
        if f"{item.name} failed" not in detail:
            detail = f"{detail}; {item.name} failed" if detail else f"{item.name} failed"
        item.config._acceptance[cid] = (False, detail)


@pytest.fixture
def criterion(request):
    """Record the outcome of one acceptance criterion, then assert it."""
    store = request.config._acceptance

    def record(cid, ok, detail):
        prev = store.get(cid, (True, ""))
        joined = f"{prev[1]}; {detail}" if prev[1] else detail
        store[cid] = (prev[0] and bool(ok), joined)
        assert ok, f"{cid} {CRITERIA[cid]}: {detail}"

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    store = getattr(config, "_acceptance", {})
    if not store:
        return
    terminalreporter.section("acceptance criteria")
    for cid, name in CRITERIA.items():
        if cid in store:
            ok, detail = store[cid]
            terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {cid} {name}: {detail}")
        else:
            terminalreporter.write_line(f"[SKIP] {cid} {name}: not run")
