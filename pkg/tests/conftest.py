import os
import sys

import numpy as np
import pytest
from hypothesis import settings

import bowser
from bowser import AssetSpec, Instance, Plan, SiteGraph

sys.path.insert(0, os.path.dirname(__file__))

settings.register_profile("ci", deadline=None, print_blob=True)
settings.load_profile("ci")

ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE):
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def worked():
    return bowser.worked_example()


@pytest.fixture(scope="session")
def worked_poisson():
    return bowser.worked_example(stochastic=True)


def path_instance(f=(2, 3, 1), cap=4.0, s=1.0, cb=4.0, sb=0.0, locs=(2, 2, 1), penalty=10.0):
    """Three-node path 1-2-3 (both directions), one asset, waits everywhere."""
    g = SiteGraph(3, ((0, 1, 1.0), (1, 0, 1.0), (1, 2, 2.0), (2, 1, 2.0)), frozenset(range(3)))
    a = AssetSpec(cap, s, np.array(locs), np.array(f, dtype=float))
    return Instance(len(f), g, (a,), cb, sb, penalty)


TABLE8_ROUTE = [1, 1, 1, 5, 6, 3, 2, 1, 1, 1]


def hand_plan(inst):
    """Zero-shortage schedule along the published route, refuels chosen by hand."""
    Q = np.zeros((3, 10))
    Q[0, 2], Q[0, 6] = 18, 7
    Q[1, 1], Q[1, 5] = 14, 12
    Q[2, 3] = 17
    B = np.zeros(10)
    B[0] = 58
    return Plan(np.array(TABLE8_ROUTE) - 1, B, Q)
