from pathlib import Path

import numpy as np
import pytest

from regioncam.io import load_idx

DATA = Path(__file__).parent / "data"
MNIST_IMAGES = DATA / "mnist1k-images-idx3-ubyte.gz"
MNIST_LABELS = DATA / "mnist1k-labels-idx1-ubyte.gz"


@pytest.fixture(scope="session")
def mnist():
    return load_idx(MNIST_IMAGES, MNIST_LABELS)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def pytest_terminal_summary(terminalreporter):
    """One PASS/FAIL line per acceptance criterion."""
    lines = []
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::" in nodeid and getattr(rep, "when", "call") in ("call", "setup"):
                if outcome == "passed" and rep.when != "call":
                    continue
                name = nodeid.split("::", 1)[1]
                lines.append((name, "PASS" if outcome == "passed" else "FAIL"))
    if lines:
        terminalreporter.section("acceptance criteria")
        for name, status in sorted(lines):
            terminalreporter.write_line(f"{status}  {name}")
