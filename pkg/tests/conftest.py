from __future__ import annotations

import numpy as np
import pytest

from mkfloc.env import Environment, make_preset


@pytest.fixture(scope="session")
def world10():
    return make_preset("world10")


@pytest.fixture(scope="session")
def labyrinth():
    return make_preset("labyrinth")


@pytest.fixture
def open_world():
    """Obstacle-free 10 x 10 world with corner and mid-edge beacons."""
    beacons = [(0, 0), (10, 0), (0, 10), (10, 10), (5, 0), (0, 5), (10, 5), (5, 10)]
    return Environment(10.0, 10.0, (), beacons, name="open")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture(scope="session")
def verdict():
    """Record one ``PASS``/``FAIL`` line per acceptance criterion."""

    def record(label: str, ok: bool, detail: str) -> bool:
        ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'}  {label}: {detail}")
        print(ACCEPTANCE_LINES[-1])
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
