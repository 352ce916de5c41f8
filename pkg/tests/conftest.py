import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(20240531)


def random_states(rng, n, margin=1e-3):
    """n interior states 0 < u < phi <= 1."""
    phi = rng.uniform(0.05, 1.0, n)
    u = phi * rng.uniform(margin, 1.0 - margin, n)
    return u, phi


ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
