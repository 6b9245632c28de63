import numpy as np
import pytest
from hypothesis import settings

settings.register_profile("default", max_examples=60, deadline=None)
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


SMALL_CONFIG = """\
[run]
trials = 2
iterations = 60
stride = 20
seed = 3

[network]
nodes = 5

[frame]
symbols = 1
subcarriers = 14
cyclic_prefix = 4

[radio]
noise = 0.1

[problem]
dimension = 3
"""


@pytest.fixture
def small_cfg():
    from ncota.config import parse_config
    return parse_config(SMALL_CONFIG, "<small>")


ACCEPTANCE = {}


@pytest.fixture
def acceptance():
    """Record ``(number, passed, detail)`` for the end-of-session summary."""
    def record(n, ok, detail):
        line = f"criterion {n:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
        ACCEPTANCE[n] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
