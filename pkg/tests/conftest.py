import os

# Pin BLAS to one thread before numpy loads anywhere: timing-sensitive tests
# (complexity brackets) must not see thread-count effects.
os.environ.setdefault("OPENBLAS_NUM_THREADS", "1")
os.environ.setdefault("OMP_NUM_THREADS", "1")
os.environ.setdefault("MKL_NUM_THREADS", "1")

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from afgm.rng import generator  # noqa: E402


@pytest.fixture
def rng():
    return generator(0, "test")


def seeded(seed: int) -> np.random.Generator:
    return generator(seed, "test")


# One line per acceptance criterion, echoed after the test summary so the
# verdicts stay visible without -s. test_acceptance.py appends to this.
ACCEPTANCE_LINES: list = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
