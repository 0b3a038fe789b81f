from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from primgraph.geometry import Primitive  # noqa: E402

ACCEPTANCE_LINES: list[str] = []


def random_primitive(rng: np.random.Generator, spread: float = 0.3, size=(0.05, 0.5)) -> Primitive:
    lengths = rng.uniform(*size, size=3)
    t = rng.uniform(-spread, spread, size=3)
    r = rng.uniform(-np.pi, np.pi, size=3)
    return Primitive(np.concatenate([lengths, t, r]))


def random_shape(rng: np.random.Generator, max_n: int = 6) -> list[Primitive]:
    return [random_primitive(rng) for _ in range(int(rng.integers(1, max_n + 1)))]


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
