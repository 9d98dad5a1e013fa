import numpy as np
import pytest

from crossfire_te.routing import shortest_path_tree
from crossfire_te.topology import GBPS, from_edges


def link_id(topo, u, v):
    for l in topo.links:
        if l.source == u and l.destination == v:
            return l.id
    raise KeyError((u, v))


@pytest.fixture
def chain():
    return from_edges([("g", "a"), ("a", "b"), ("b", "c")], {"g"}, "c")


@pytest.fixture
def diamond():
    return from_edges([("g", "a"), ("g", "b"), ("a", "x"), ("b", "x")], {"g"}, "x")


# Routing tree of the worked bisection example: g feeds 5, which serves 1-4
# directly or via 1, and 6-9 via 6.  A second link g-6 is the rehoming option.
NINE_EDGES = [("g", "5"), ("5", "1"), ("1", "2"), ("1", "3"), ("5", "4"), ("5", "6"),
              ("6", "7"), ("7", "8"), ("6", "9"), ("g", "6")]
NINE_DEMAND = {"1": 0.1, "2": 0.1, "3": 0.1, "4": 0.1, "5": 0.1,
               "6": 0.125, "7": 0.125, "8": 0.125, "9": 0.125}


@pytest.fixture
def nine_tree():
    topo = from_edges(NINE_EDGES, {"g"}, "7")
    w = [1.0] * len(topo.links)
    for u, v in (("g", "6"), ("6", "g")):
        w[link_id(topo, u, v)] = 10.0
    return topo, shortest_path_tree(topo, w)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
