import numpy as np
import pytest

import cylpatch

ACCEPTANCE_LINES = []


@pytest.fixture(scope="session", autouse=True)
def _warm_kernels():
    # first call compiles the JIT kernels; later sessions load the disk cache
    cylpatch.warmup()


@pytest.fixture(scope="session")
def acceptance_log():
    def record(line: str):
        ACCEPTANCE_LINES.append(line)

    return record


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.write_sep("-", "acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def random_star_contour(rng, center_x1=2.0):
    """Smooth star-shaped test contour well away from the wall."""
    n = 2048
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    r = 0.6 + 0.12 * np.cos((2 + rng.integers(0, 3)) * th + rng.uniform(0, 2 * np.pi)) \
        + 0.06 * np.cos((5 + rng.integers(0, 2)) * th + rng.uniform(0, 2 * np.pi))
    c1 = center_x1 + rng.uniform(-0.3, 0.3)
    c2 = rng.uniform(-2.0, 2.0)
    m = np.column_stack([c1 + r * np.cos(th), c2 + r * np.sin(th)])
    return cylpatch.Contour(m, 1.0, 0)
