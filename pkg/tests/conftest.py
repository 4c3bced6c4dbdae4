import json
from pathlib import Path

import pytest

from chanshare.config import DEFAULTS

GOLDEN = json.loads((Path(__file__).parent / "golden.json").read_text())


@pytest.fixture
def cfg():
    return DEFAULTS


@pytest.fixture
def golden():
    return GOLDEN


ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record one acceptance line; the test then asserts on it."""

    def record(number, ok, detail):
        ACCEPTANCE[number] = (bool(ok), detail)
        print(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
