import numpy as np
import pytest

from tvdecopt.problem import ProblemInstance, SubgradientOracle, l1_distance_instance


def abs_oracle(scale=1.0):
    return SubgradientOracle(lambda x: scale * float(np.sum(np.abs(x))),
                             lambda x: scale * np.sign(np.atleast_1d(np.asarray(x, dtype=float))),
                             name="abs")


def zero_oracle(d):
    return SubgradientOracle(lambda x: 0.0, lambda x: np.zeros(d), name="zero")


@pytest.fixture
def abs_instance():
    def make(n=1, d=1, r=0.0, R=1.0):
        return l1_distance_instance(np.zeros((n, d)), r=r, R=R)
    return make


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = []


@pytest.fixture
def acceptance():
    """Record one pass/fail line per acceptance criterion."""
    def record(criterion, passed, detail):
        line = f"criterion {criterion}: {'PASS' if passed else 'FAIL'}  {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
