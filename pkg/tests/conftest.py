import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=100,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("ci", deadline=None, max_examples=300,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def make_runtime():
    """Runtime factory whose runtimes are finalized after the test."""
    from redthreads import Runtime, RuntimeConfig

    made = []

    def make(**kw):
        rt = Runtime(RuntimeConfig(**kw))
        made.append(rt)
        return rt

    yield make
    for rt in made:
        if not rt.finalized:
            rt.finalize()


# -- acceptance criteria report ---------------------------------------------------------

ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """``criterion(n, ok, detail)`` records one acceptance line and prints it."""

    def record(n, ok, detail=""):
        line = f"C{n:<2} {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
