"""Shared fixtures and the acceptance-criterion report.

Acceptance tests register one verdict per criterion through
``record_criterion``; a terminal-summary hook prints them as a compact
pass/fail table at the end of the pytest run, one line per criterion.
"""

from __future__ import annotations

import numpy as np
import pytest

CRITERION_RESULTS: dict[str, tuple[bool, str]] = {}


def record_criterion(name: str, ok: bool, detail: str) -> None:
    CRITERION_RESULTS[name] = (bool(ok), detail)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not CRITERION_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for name, (ok, detail) in CRITERION_RESULTS.items():
        verdict = "PASS" if ok else "FAIL"
        tr.write_line(f"[{verdict}] {name}: {detail}")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
