import numpy as np
import pytest

from qauction import _kernels
from qauction.allocation import AuctionConfig
from qauction.bidlang import NULL_BID, BidSuperposition

BACKENDS = ["numpy"] + (["numba"] if _kernels.HAS_NUMBA else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    prev = _kernels.get_backend()
    _kernels.set_backend(request.param)
    yield request.param
    _kernels.set_backend(prev)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def cfg22():
    return AuctionConfig.single_item(2, 2)


def two_term(owner, bid, minus=False):
    return BidSuperposition.weighted([(NULL_BID, 1.0), (bid, -1.0 if minus else 1.0)], owner)


def within_3sigma(hits, trials, p):
    sigma = np.sqrt(max(p * (1 - p), 1e-12) / trials)
    return abs(hits / trials - p) <= 3 * sigma + 1e-12


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
