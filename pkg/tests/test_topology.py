import io

import networkx as nx
import pytest

from crossfire_te.topology import (GBPS, GraphMLParseError, LinkRecord, NodeRecord, Topology,
                                   TopologyError, bundled, bundled_names, from_edges, load_graphml,
                                   neighbors_out, select_endpoints)


def graphml(nodes, edges, drop_lat=None):
    g = nx.Graph()
    for n, lat, lon in nodes:
        attrs = {"label": n, "Longitude": lon}
        if n != drop_lat:
            attrs["Latitude"] = lat
        g.add_node(n, **attrs)
    g.add_edges_from(edges)
    buf = io.BytesIO()
    nx.write_graphml(g, buf)
    return buf.getvalue()


def test_smallest_graph_two_links_of_default_capacity():
    t = load_graphml(graphml([("a", 10, 0), ("b", 5, 0)], [("a", "b")]))
    assert len(t.nodes) == 2
    assert len(t.links) == 2
    assert all(l.capacity == GBPS for l in t.links)
    assert {(l.source, l.destination) for l in t.links} == {("a", "b"), ("b", "a")}


def test_missing_latitude_names_the_node():
    data = graphml([("a", 10, 0), ("b", 5, 0)], [("a", "b")], drop_lat="b")
    with pytest.raises(TopologyError, match="'b'"):
        load_graphml(data)


def test_malformed_xml():
    with pytest.raises(GraphMLParseError):
        load_graphml(b"<graphml><graph><node id='a'></graph>")


def test_disconnected_graph_rejected():
    data = graphml([("a", 10, 0), ("b", 5, 0), ("c", 1, 0), ("d", 0, 0)], [("a", "b"), ("c", "d")])
    with pytest.raises(TopologyError):
        load_graphml(data)


@pytest.mark.parametrize("name", bundled_names())
def test_bundled_zoo_files_load_at_one_gbps(name):
    t = load_graphml(bundled(name))
    assert all(l.capacity == GBPS for l in t.links)
    assert t.target not in t.gateways
    # loading is deterministic and doubles the undirected edges
    again = load_graphml(bundled(name))
    assert again == t
    g = nx.read_graphml(io.BytesIO(bundled(name)), force_multigraph=True)
    assert len(t.links) == 2 * g.number_of_edges()


def test_select_endpoints_by_latitude():
    nodes = [NodeRecord("m", 40, 0), NodeRecord("n", 60, 0), NodeRecord("s", 20, 0)]
    assert select_endpoints(nodes) == ("n", "s")


def test_select_endpoints_tie_on_max_latitude_smaller_id():
    nodes = [NodeRecord("z", 60, 0), NodeRecord("b", 60, 0), NodeRecord("s", 20, 0)]
    assert select_endpoints(nodes)[0] == "b"


def test_select_endpoints_single_node():
    with pytest.raises(TopologyError):
        select_endpoints([NodeRecord("a", 1, 1)])


def test_select_endpoints_equal_latitudes():
    with pytest.raises(TopologyError, match="explicit"):
        select_endpoints([NodeRecord("a", 1, 1), NodeRecord("b", 1, 2)])


def test_neighbors_out_ascending_and_unknown():
    t = from_edges([("h", "a"), ("h", "b"), ("h", "c")], {"h"}, "c")
    out = neighbors_out(t, "h")
    assert len(out) == 3 and out == sorted(out)
    with pytest.raises(KeyError):
        neighbors_out(t, "nope")


def test_directed_leaf_has_no_out_links():
    nodes = (NodeRecord("g", 1, 0), NodeRecord("x", 0, 0))
    t = Topology(nodes, (LinkRecord(0, "g", "x", GBPS),), frozenset({"g"}), "x")
    assert t.neighbors_out("x") == []


def test_invalid_records():
    with pytest.raises(ValueError):
        NodeRecord("a", 91, 0)
    with pytest.raises(ValueError):
        LinkRecord(0, "a", "a", GBPS)
    with pytest.raises(ValueError):
        LinkRecord(0, "a", "b", 0)


def test_target_may_not_be_a_gateway():
    with pytest.raises(TopologyError):
        from_edges([("g", "a")], {"g"}, "g")


def test_explicit_endpoints_override():
    t = load_graphml(bundled("Abilene"), gateways={"0"}, target="1")
    assert t.gateways == {"0"} and t.target == "1"


def test_capacity_attribute_is_honoured():
    g = nx.Graph()
    g.add_node("a", Latitude=1.0, Longitude=0.0)
    g.add_node("b", Latitude=0.0, Longitude=0.0)
    g.add_edge("a", "b", capacity=5e8)
    buf = io.BytesIO()
    nx.write_graphml(g, buf)
    t = load_graphml(buf.getvalue())
    assert [l.capacity for l in t.links] == [5e8, 5e8]
