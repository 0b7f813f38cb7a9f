from __future__ import annotations

import numpy as np
import pytest
from hypothesis import settings

from spl.domain import Domain
from spl.mesh import build_mesh
from spl.weights import Weight

settings.register_profile("spl", deadline=None, max_examples=60)
settings.load_profile("spl")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def line512():
    return build_mesh(Domain.interval(-1.0, 1.0), 512)


@pytest.fixture(scope="session")
def unit_weight():
    return Weight.constant(1.0, n=1, p=2.0)


def positive_field(mesh, rng, floor=0.05):
    """Random field, positive inside, zero on the boundary."""
    v = floor + rng.random(mesh.n_nodes)
    v[mesh.boundary_mask] = 0.0
    return v


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record one acceptance line; printed again in the terminal summary."""

    def record(number: int, ok: bool, detail: str):
        line = f"[criterion {number}] {'PASS' if ok else 'FAIL'}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip("]"))):
            terminalreporter.write_line(line)
