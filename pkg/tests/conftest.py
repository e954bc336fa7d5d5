import dataclasses
import functools

import pytest

from spatial_ilc.baseline import dp_solve
from spatial_ilc.config import BUNDLED_TRACKS, load_params, load_track
from spatial_ilc.learner import run_learning

# criterion number -> (passed, detail); filled by test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@functools.lru_cache(maxsize=None)
def bundled(name: str):
    return load_track(name)


@functools.lru_cache(maxsize=None)
def default_params():
    return load_params()


@functools.lru_cache(maxsize=None)
def dp_at(name: str, tau: float):
    """DP solution for a bundled track at the default grid."""
    p = default_params()
    return dp_solve(bundled(name), dataclasses.replace(p.plant, tau=tau), p.dp)


@functools.lru_cache(maxsize=None)
def learn_at(name: str, tau: float):
    """Learning run for a bundled track with default gains."""
    p = default_params()
    return run_learning(bundled(name), dataclasses.replace(p.plant, tau=tau), p.ilc, p.learning)


@pytest.fixture(scope="session")
def params():
    return load_params()


@pytest.fixture(scope="session")
def tracks():
    return {name: bundled(name) for name in BUNDLED_TRACKS}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
