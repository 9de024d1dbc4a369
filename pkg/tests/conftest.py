import functools

import pytest

from wholebody_mpc.loop import run_scenario
from wholebody_mpc.scenario import corpus_path, parse_scenario

# criterion number -> (passed, detail), filled in by test_acceptance
ACCEPTANCE = {}


@functools.lru_cache(maxsize=None)
def corpus_run(name):
    """Scenario and closed-loop trace for a shipped scenario, computed once per session."""
    sc = parse_scenario(corpus_path(name))
    return sc, run_scenario(sc)


@pytest.fixture
def corpus():
    return corpus_run


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
