import numpy as np
import pytest

from fedadmm.core import ClientState
from fedadmm.data import DataShard
from fedadmm.models import RidgeModel, RidgeSpec


def quadratic_client(target=3.0, lam=0.0, beta=1.0, sigma=0.4, eta=0.25):
    """1-D client with f(u) = 0.5 (u - target)^2, built as a ridge model with gamma = 0."""
    shard = DataShard(np.array([[1.0]]), np.array([target]))
    st = ClientState(np.zeros(1), np.array([lam]), beta, sigma, 1.0, 1.0, eta, shard)
    return st, RidgeModel(RidgeSpec(0.0, 1))


def random_shard(rng, count, dim):
    return DataShard(rng.standard_normal((count, dim)), rng.standard_normal(count))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# acceptance bookkeeping: one pass/fail line per criterion in the terminal summary
CRITERIA: dict[str, dict] = {}


@pytest.fixture
def criterion(request):
    label = request.node.get_closest_marker("criterion").args[0]
    entry = CRITERIA.setdefault(label, {"outcome": "not run", "detail": ""})

    def note(detail):
        entry["detail"] = detail

    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    entry = CRITERIA.setdefault(marker.args[0], {"outcome": "not run", "detail": ""})
    entry["outcome"] = "PASS" if rep.passed else "FAIL"


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(CRITERIA, key=lambda s: (int(s.rstrip("abcd")), s)):
        entry = CRITERIA[label]
        terminalreporter.write_line(f"criterion {label:<3} {entry['outcome']:<5} {entry['detail']}")
