from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from procoh.cli_reporting import load_scenario, run_scenario  # noqa: E402
from procoh.fp_linalg import FpMatrix  # noqa: E402

# Action of h on H^1(K_1) in the basis y11, y12, y21, y22 (columns are images):
# y11 -> y11 - y21, y12 -> y11 + y12 - y21 - y22, y21 -> y21, y22 -> y21 + y22.
H1_ACTION = np.array(
    [
        [1, 1, 0, 0],
        [0, 1, 0, 0],
        [-1, -1, 1, 1],
        [0, -1, 0, 1],
    ],
    dtype=np.int64,
)


def h1_action_matrix(p: int) -> FpMatrix:
    return FpMatrix(H1_ACTION, p)


_RUNS: dict = {}


def scenario_run(name: str, p: int | None = None):
    key = (name, p)
    if key not in _RUNS:
        _RUNS[key] = run_scenario(load_scenario(name, p))
    return _RUNS[key]


@pytest.fixture(scope="session")
def gl2_p3():
    return scenario_run("gl2", 3)


@pytest.fixture(scope="session")
def gl2_p5():
    return scenario_run("gl2", 5)


@pytest.fixture(scope="session")
def gl2_p7():
    return scenario_run("gl2", 7)


@pytest.fixture(scope="session")
def extraspecial():
    return scenario_run("extraspecial3")


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(results):
        status, detail = results[number]
        terminalreporter.write_line(f"criterion {number}: {status} ({detail})")
