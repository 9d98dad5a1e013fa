import math

import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from crossfire_te.defense import FloodEvent, FloodReport
from crossfire_te.routing import (InfeasiblePathError, changed_destinations, dst_sets, hop_count_routing,
                                  path, path_nodes, shortest_path_tree)
from crossfire_te.te_base import TEResult
from crossfire_te.te_remote import (BISECTION, DISAMBIGUATION, EmptySplitError, InverseResidualFallback,
                                    RemoteEngine, RemoteState, bisect_tree, disambiguate,
                                    is_connected_subtree, ranked_cuts, rehome, remote_step)
from crossfire_te.topology import GBPS, from_edges
from crossfire_te.traffic import BENIGN, Host, demand_matrix, loads_from_demands

from .conftest import NINE_DEMAND, link_id
from .strategies import spt_instances, topologies


def zeros(topo):
    return np.zeros(len(topo.links))


def test_nine_split_by_demand(nine_tree):
    topo, r = nine_tree
    kept, detached, cut = bisect_tree(topo, r, set("123456789"), NINE_DEMAND)
    assert kept == set("12345") and detached == set("6789")
    assert cut == link_id(topo, "5", "6")
    assert math.isclose(sum(NINE_DEMAND[n] for n in kept), 0.5)
    assert math.isclose(sum(NINE_DEMAND[n] for n in detached), 0.5)


def test_nine_rehome_via_direct_link(nine_tree):
    topo, r = nine_tree
    new = rehome(topo, r, set("6789"), NINE_DEMAND, zeros(topo))
    for n in "6789":
        nodes = path_nodes(topo, "g", path(topo, new, "g", n))
        assert nodes[:2] == ["g", "6"]
        assert set(path(topo, new, "g", n)).isdisjoint(path(topo, r, "g", "5") + [link_id(topo, "5", "6")])
    assert changed_destinations(r, new) == set("6789")
    for n in "12345":
        assert path(topo, new, "g", n) == path(topo, r, "g", n)


def test_ranked_cuts_partition_and_order(nine_tree):
    topo, r = nine_tree
    cuts = list(ranked_cuts(topo, r, set("123456789"), NINE_DEMAND))
    assert cuts[0] == bisect_tree(topo, r, set("123456789"), NINE_DEMAND)
    assert len(cuts) == 8 and len({c for *_, c in cuts}) == 8
    for kept, detached, _ in cuts:
        assert kept | detached == set("123456789") and not kept & detached


def test_two_node_split():
    t = from_edges([("g", "a"), ("a", "b")], {"g"}, "b")
    r = hop_count_routing(t)
    kept, detached, _ = bisect_tree(t, r, {"a", "b"}, {"a": 0.5, "b": 0.5})
    assert (kept, detached) == ({"a"}, {"b"})


def test_singleton_is_empty_split(nine_tree):
    topo, r = nine_tree
    with pytest.raises(EmptySplitError):
        bisect_tree(topo, r, {"7"}, NINE_DEMAND)


def test_rehome_chain_has_no_alternative(chain):
    r = hop_count_routing(chain)
    with pytest.raises(InfeasiblePathError):
        rehome(chain, r, {"b", "c"}, {"b": 1.0, "c": 1.0}, zeros(chain))


def test_rehome_demand_over_residual(nine_tree):
    topo, r = nine_tree
    loads = zeros(topo)
    loads[link_id(topo, "g", "6")] = 0.85 * GBPS
    with pytest.raises(InfeasiblePathError):
        rehome(topo, r, set("6789"), {n: 0.1 * GBPS for n in "6789"}, loads)


def test_disambiguate_diamond_opposite_arms(diamond):
    # both suspects behind arm a: a and x
    r = hop_count_routing(diamond)
    pa = path_nodes(diamond, "g", path(diamond, r, "g", "x"))
    assert pa[1] == "a"
    new, flagged = disambiguate(RemoteState(), diamond, r, {"a", "x"})
    assert path_nodes(diamond, "g", path(diamond, new, "g", "x")) == ["g", "b", "x"]
    assert path(diamond, new, "g", "a") == path(diamond, r, "g", "a")
    assert not flagged


def test_disambiguate_already_decoupled(diamond):
    r = hop_count_routing(diamond)
    new, flagged = disambiguate(RemoteState(), diamond, r, {"a", "b"})
    assert new is r and not flagged


def test_disambiguate_three_suspects_two_corridors():
    # g reaches m only through a or b: three suspects, two disjoint corridors
    t = from_edges([("g", "a"), ("g", "b"), ("a", "x"), ("b", "x"), ("a", "y"), ("b", "y")], {"g"}, "x")
    r = hop_count_routing(t)
    new, flagged = disambiguate(RemoteState(), t, r, {"a", "x", "y"})
    assert flagged
    second = {s: path_nodes(t, "g", path(t, new, "g", s))[1] for s in ("x", "y")}
    assert path_nodes(t, "g", path(t, new, "g", "a"))[1] == "a"
    assert "b" in second.values()


def test_disambiguate_needs_two(diamond):
    with pytest.raises(ValueError):
        disambiguate(RemoteState(), diamond, hop_count_routing(diamond), {"a"})


def _flood(topo, r, lid, t=1):
    dst = dst_sets(topo, r)[lid]
    return FloodReport(t, [FloodEvent(lid, frozenset(), frozenset(dst))])


class _Marker:
    """Fallback that records calls and returns a recognizable instance."""

    def __init__(self):
        self.calls = 0

    def step(self, topo, r, report, hosts):
        self.calls += 1
        return TEResult(r.with_updates({}), trace={"engine": "marker"})


def test_fallback_output_used_for_that_cycle_only(chain):
    r = hop_count_routing(chain)
    fb = _Marker()
    state = RemoteState()
    rep = _flood(chain, r, link_id(chain, "g", "a"))
    demands = {("g", "a"): 1.0, ("g", "b"): 1.0, ("g", "c"): 1.0}
    state, te = remote_step(state, chain, r, rep, zeros(chain), demands, None, fb)
    assert te.fallback and fb.calls == 1 and te.routing.version == r.version + 1
    assert te.trace["engine"] == "marker" and te.trace["fallback"]
    assert state.trace[-1]["fallback"]


def test_nine_step_bisects_and_relieves(nine_tree):
    topo, r = nine_tree
    demands = {("g", n): v * GBPS * 0.9 for n, v in NINE_DEMAND.items()}
    loads = loads_from_demands(topo, r, demands)
    lid = link_id(topo, "g", "5")
    rep = _flood(topo, r, lid)
    state, te = remote_step(RemoteState(), topo, r, rep, loads, demands, None, _Marker())
    assert not te.fallback
    assert te.trace["cut_link"] == link_id(topo, "5", "6")
    assert te.trace["rehome_path"] == ["g", "6"]
    assert state.suspect_tree_nodes == set("123456789")
    assert state.bisection_steps == 1
    new_load = loads_from_demands(topo, te.routing, demands)
    assert new_load[lid] < 0.9 * GBPS
    assert te.routing.fingerprint() in state.past_instances


def test_phase_switches_at_two():
    t = from_edges([("g", "a"), ("a", "b"), ("g", "b")], {"g"}, "b")
    r = hop_count_routing(t)
    lid = link_id(t, "g", "a")
    rep = FloodReport(1, [FloodEvent(lid, frozenset(), frozenset({"a"}))])
    rep2 = FloodReport(1, [FloodEvent(lid, frozenset(), frozenset({"a", "b"}))])
    state, te = remote_step(RemoteState(), t, r, rep2, zeros(t), {("g", "a"): 1.0}, None, _Marker())
    assert state.phase == DISAMBIGUATION and te.trace["phase"] == DISAMBIGUATION
    state, _ = remote_step(RemoteState(), t, r, rep, zeros(t), {("g", "a"): 1.0}, None, _Marker())
    assert state.phase == DISAMBIGUATION


def test_retarget_keeps_couple_counts(nine_tree):
    topo, r = nine_tree
    state = RemoteState(suspect_tree_nodes={"1", "2"}, couple_counts={"1": 4}, phase=DISAMBIGUATION)
    rep = FloodReport(1, [FloodEvent(link_id(topo, "6", "7"), frozenset(), frozenset({"7", "8"}))])
    state, _ = remote_step(state, topo, r, rep, zeros(topo), {}, None, _Marker())
    assert state.suspect_tree_nodes == {"7", "8"}
    assert state.couple_counts["1"] == 4 and state.couple_counts["7"] == 1


def test_empty_report_rejected(chain):
    with pytest.raises(ValueError):
        remote_step(RemoteState(), chain, hop_count_routing(chain), FloodReport(1, []), zeros(chain), {}, None,
                    _Marker())


def test_inverse_residual_fallback_relieves(diamond):
    r = hop_count_routing(diamond)
    hosts = [Host(i, BENIGN, "g", "x", 0.6 * GBPS) for i in range(1)] + \
            [Host(1, BENIGN, "g", "a", 0.5 * GBPS)]
    te = InverseResidualFallback().step(diamond, r, _flood(diamond, r, link_id(diamond, "g", "a")), hosts)
    loads = loads_from_demands(diamond, te.routing, demand_matrix(hosts))
    assert loads.max() < 0.9 * GBPS


def test_engine_adopts_and_steps(nine_tree):
    topo, r = nine_tree
    eng = RemoteEngine(InverseResidualFallback())
    eng.adopt(topo, r)
    hosts = [Host(i, BENIGN, "g", n, v * 0.9 * GBPS) for i, (n, v) in enumerate(sorted(NINE_DEMAND.items()))]
    rep = _flood(topo, r, link_id(topo, "g", "5"))
    te = eng.step(topo, r, rep, hosts)
    assert not te.fallback and te.routing.fingerprint() != r.fingerprint()


@st.composite
def rooted_subtrees(draw):
    topo = draw(topologies())
    r = draw(spt_instances(topo))
    dst = dst_sets(topo, r)
    cands = [l for l, s in dst.items() if len(s) >= 2]
    assume(cands)
    lid = draw(st.sampled_from(sorted(cands)))
    nodes = sorted(topo.node_ids)
    dem = {n: draw(st.floats(0.0, 1.0)) for n in nodes}
    return topo, r, dst[lid], dem


@settings(max_examples=60, deadline=None)
@given(rooted_subtrees())
def test_bisection_partitions_subtree(case):
    topo, r, nodes, dem = case
    assert is_connected_subtree(topo, r, nodes, topo.gateways)
    kept, detached, cut = bisect_tree(topo, r, nodes, dem)
    assert kept | detached == nodes and not kept & detached
    assert kept and detached
    assert topo.links[cut].destination in detached and topo.links[cut].source in kept


@settings(max_examples=60, deadline=None)
@given(rooted_subtrees())
def test_rehome_locality(case):
    topo, r, nodes, dem = case
    _, detached, _ = bisect_tree(topo, r, nodes, dem)
    try:
        new = rehome(topo, r, detached, {n: 0.0 for n in dem}, zeros(topo))
    except InfeasiblePathError:
        return
    assert changed_destinations(r, new) <= detached
    for n in topo.node_ids:
        for d in topo.node_ids:
            if n != d:
                path(topo, new, n, d)  # loop-free everywhere


def test_bisection_tries_next_cut_when_best_cannot_rehome(nine_tree):
    # heavy 1-2-3 branch makes 5->1 the most balanced cut, but that branch
    # has no way around 5, so the split at 5->6 is the one adopted
    topo, r = nine_tree
    share = {"1": 0.2, "2": 0.15, "3": 0.15, "4": 0.1, "5": 0.1, "6": 0.1, "7": 0.1, "8": 0.05, "9": 0.05}
    assert bisect_tree(topo, r, set(share), share)[2] == link_id(topo, "5", "1")
    demands = {("g", n): v * GBPS * 0.9 for n, v in share.items()}
    loads = loads_from_demands(topo, r, demands)
    lid = link_id(topo, "g", "5")
    state, te = remote_step(RemoteState(), topo, r, _flood(topo, r, lid), loads, demands, None, _Marker())
    assert not te.fallback
    assert te.trace["cut_link"] == link_id(topo, "5", "6")
    assert te.trace["rehome_path"] == ["g", "6"]
