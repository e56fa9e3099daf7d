"""Shared fixtures and the acceptance-result summary printer."""

import pytest

from reagent.environment import make_corpus
from reagent.types import TaskFamily

ALL_FAMILIES = (
    TaskFamily.ARITHMETIC,
    TaskFamily.LOOKUP,
    TaskFamily.FILE_EXTRACT,
    TaskFamily.MULTI_HOP,
)

# filled in by tests/test_acceptance.py; printed after the run
ACCEPTANCE_RESULTS: list[tuple[int, str, bool, str]] = []


@pytest.fixture(scope="session")
def mixed_tasks():
    return make_corpus(500, 40, ALL_FAMILIES)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for num, name, ok, detail in sorted(ACCEPTANCE_RESULTS):
        status = "PASS" if ok else "FAIL"
        line = f"criterion {num:2d} [{status}] {name}"
        if detail:
            line += f" ({detail})"
        tr.write_line(line)
