import contextlib

import pytest

ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@contextlib.contextmanager
def _criterion(number: int, label: str):
    ok = False
    try:
        yield
        ok = True
    finally:
        prev = ACCEPTANCE.get(number, (True, label))[0]
        ACCEPTANCE[number] = (ok and prev, label)


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, label = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {label}")
