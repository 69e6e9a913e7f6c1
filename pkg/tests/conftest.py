import numpy as np
import pytest

from eigensupport.graph_core import make_kite
from eigensupport.spectral_ops import SpectralFunction, apply_spectral_function


@pytest.fixture
def kite5():
    s = make_kite(5)
    a = s.adjacency()
    w = a / np.linalg.norm(a)
    return s, w, apply_spectral_function(w, SpectralFunction.exp())


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


def pytest_addoption(parser):
    parser.addoption("--full", action="store_true", default=False,
                     help="also run the long acceptance experiments")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def report_criterion():
    def record(label, ok, detail):
        status = "SKIP" if ok is None else ("PASS" if ok else "FAIL")
        ACCEPTANCE_LINES.append(f"{label}: {status} ({detail})")
        return ok
    return record
