from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
import pytest

from qgrowth.continuation import Caps, detect_fold, trace_branch
from qgrowth.verify import model_problem

# criterion number -> (passed, detail); filled by the acceptance tests
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@dataclass
class Timed:
    value: object
    seconds: float


def timed(fn, *args, **kwargs) -> Timed:
    t = time.perf_counter()
    out = fn(*args, **kwargs)
    return Timed(out, time.perf_counter() - t)


@pytest.fixture(scope="session")
def fold_branch() -> Timed:
    """Positive forcing on (0, 1), n = 256, traced through the fold to the norm cap."""
    P = model_problem(256, h=1.0)
    return timed(trace_branch, P, (0.0, 10.0), 0.05, Caps(norm_cap=100.0))


@pytest.fixture(scope="session")
def fold_value(fold_branch) -> float:
    f = detect_fold(fold_branch.value)
    assert f.present
    return f.value


@pytest.fixture(scope="session")
def negative_branch() -> Timed:
    """Forcing h = -1 on (0, 1), n = 256, over lam in [0, 2]."""
    P = model_problem(256, h=-1.0)
    return timed(trace_branch, P, (0.0, 2.0), 0.05, Caps(norm_cap=100.0))


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
