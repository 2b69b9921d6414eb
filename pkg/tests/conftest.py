import os
import sys

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("default", deadline=None, max_examples=60, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rig():
    from mc3dtrack.simulator import standard_rig

    return standard_rig()


@pytest.fixture
def pinhole():
    """``M = [I | 0]``."""
    return np.hstack([np.eye(3), np.zeros((3, 1))])


def random_spd(rng, n, scale=1.0):
    A = rng.normal(size=(n, n))
    return scale * (A @ A.T / n + 0.1 * np.eye(n))


_criteria: dict[int, str] = {}


@pytest.fixture
def criterion():
    """Record one ``criterion N: PASS/FAIL`` line; it is echoed in the terminal summary."""

    def report(n: int, ok: bool, detail: str) -> bool:
        line = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
        _criteria[n] = line
        print(line)
        return ok

    return report


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_criteria):
            terminalreporter.write_line(_criteria[n])
