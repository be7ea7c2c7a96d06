import pytest

# criterion id -> (passed, detail); filled by tests in test_acceptance.py
ACCEPTANCE: dict[str, tuple[bool, str]] = {}


@pytest.fixture
def record_criterion():
    def record(cid, passed, detail=""):
        ACCEPTANCE[cid] = (bool(passed), detail)

    return record


def pytest_runtest_logreport(report):
    # a criterion whose test errored before recording still shows as failed
    if report.when == "call" and report.failed and "test_acceptance.py" in report.nodeid:
        name = report.nodeid.rsplit("::", 1)[-1]
        cid = name.split("_")[1] if name.startswith("test_c") else name
        if cid not in ACCEPTANCE or ACCEPTANCE[cid][0]:
            ACCEPTANCE[cid] = (False, "test failed")


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE, key=lambda c: int(c[1:]) if c[1:].isdigit() else 99):
        ok, detail = ACCEPTANCE[cid]
        tr.write_line(f"{cid}: {'PASS' if ok else 'FAIL'}  {detail}")
