from __future__ import annotations

import re

import numpy as np
import pytest

from aqedlab.linalg import apply_local
from aqedlab.mps import MpsTensor, dense_state, random_injective_mps

_CRITERIA: dict[int, tuple[str, str]] = {}
_PATTERN = re.compile(r"test_acceptance\.py::test_criterion_(\d+)")


def dense_element(a1: MpsTensor, x1, a2: MpsTensor, x2, f, support, n: int) -> complex:
    """Oracle <Psi1|F|Psi2> from explicit state vectors."""
    v1 = dense_state(a1, x1, n)
    v2 = dense_state(a2, x2, n)
    if f is not None:
        v2 = apply_local(v2, f, support, n, a1.p)
    return complex(np.vdot(v1, v2))


def random_operator(rng: np.random.Generator, d: int, p: int = 2) -> np.ndarray:
    dim = p**d
    return rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))


def random_support(rng: np.random.Generator, n: int, d: int) -> list[int]:
    return [int(s) for s in rng.choice(n, size=d, replace=False)]


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(20240611)


@pytest.fixture
def injective_d2() -> MpsTensor:
    return random_injective_mps(2, 2, seed=7)


def pytest_runtest_logreport(report):
    m = _PATTERN.search(report.nodeid)
    if not m:
        return
    k = int(m.group(1))
    detail = dict(report.user_properties).get("detail", "")
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _CRITERIA[k] = (status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        status, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k}: {status}" + (f"  ({detail})" if detail else ""))
