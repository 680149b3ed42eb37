import pathlib
import sys

import numpy as np
import pytest

from snmono.positive_sets import OperatorGraph
from snmono.sn_core import product_space

DATA = pathlib.Path(__file__).resolve().parent.parent / "data"


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def data_dir():
    return DATA


@pytest.fixture
def identity_graph():
    return OperatorGraph(product_space(1), [[1.0]])


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance") or sys.modules.get("tests.test_acceptance")
    if mod is not None and mod.RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
