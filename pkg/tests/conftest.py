import sys

import numpy as np
import pytest

from fracrd import DepthField


@pytest.fixture
def rng():
    return np.random.default_rng(20240607)


def random_field(rng, h=8, w=8, lo=900.0, hi=1100.0):
    return DepthField(rng.uniform(lo, hi, size=(h, w)))


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1].rstrip(":"))):
        terminalreporter.write_line(line)
