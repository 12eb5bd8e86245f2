"""Shared fixtures: cached test graphs and the acceptance summary hook."""

import os

import pytest

from rhslab.graph import TannerGraph, generate_regular_code, load_alist


@pytest.fixture(scope="session")
def tiny_graph():
    # 6 variables, 3 checks, hand-checkable
    cn_adj = [[0, 1, 2, 3], [2, 3, 4, 5], [0, 1, 4, 5]]
    vn_adj = [[0, 2], [0, 2], [0, 1], [0, 1], [1, 2], [1, 2]]
    return TannerGraph(vn_adj, cn_adj)


@pytest.fixture(scope="session")
def g36():
    """Half-rate (3,6)-regular code used by the fast end-to-end tests."""
    return generate_regular_code(512, 3, 6, seed=5)


@pytest.fixture(scope="session")
def g632():
    """(6,32)-regular high-rate code for the transfer/settling experiments.

    A published 2048-bit alist can be supplied via RHSLAB_8023AN_ALIST; the
    default is a generated stand-in with the same degree profile.
    """
    path = os.environ.get("RHSLAB_8023AN_ALIST")
    if path:
        return load_alist(path)
    return generate_regular_code(2048, 6, 32, seed=5)


@pytest.fixture(scope="session")
def g632_is_substitute():
    return not os.environ.get("RHSLAB_8023AN_ALIST")


# ---------------------------------------------------------------------------
# acceptance criterion reporting: one visible pass/fail line per criterion

ACCEPTANCE_LINES = []


def record_criterion(num, passed, detail):
    ACCEPTANCE_LINES.append((num, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.write_sep("-", "acceptance criteria")
    for num, passed, detail in sorted(ACCEPTANCE_LINES):
        word = "PASS" if passed else "FAIL"
        terminalreporter.write_line("criterion %2d %s  %s" % (num, word, detail))
