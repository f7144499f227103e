import numpy as np
import pytest

from gssc.graph import generate


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def er_graphs(count, n_max, seed=0, n_min=3, p=0.4):
    rng = np.random.default_rng(seed)
    return [generate("erdos_renyi", n=int(rng.integers(n_min, n_max + 1)), seed=seed * 1000 + i, p=p)
            for i in range(count)]


ACCEPTANCE_LINES = []


def report(criterion, ok, detail):
    line = f"criterion {criterion:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
