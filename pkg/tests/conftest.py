import pytest

# criterion id -> (passed, detail); filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for cid in sorted(ACCEPTANCE):
        passed, detail = ACCEPTANCE[cid]
        terminalreporter.write_line(f"criterion {cid:>2}: {'PASS' if passed else 'FAIL'}  {detail}")


@pytest.fixture
def criterion():
    """Record (and print) one acceptance line, then assert it."""

    def record(cid: int, passed: bool, detail: str):
        ACCEPTANCE[cid] = (bool(passed), detail)
        print(f"criterion {cid}: {'PASS' if passed else 'FAIL'}  {detail}")
        assert passed, detail

    return record
