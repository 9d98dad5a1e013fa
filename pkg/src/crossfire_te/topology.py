"""Immutable network graph with gateways and a target node.

Links are directed.  Every undirected edge read from GraphML expands into two
links with consecutive integer ids, ``2k`` for the file direction and ``2k+1``
for the reverse, so link ids double as a deterministic tie-break order.
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Iterable, Mapping, Optional, Sequence
from xml.etree.ElementTree import ParseError as _XmlParseError

import networkx as nx

logger = logging.getLogger(__name__)

GBPS = 1e9

# Attribute spellings seen across Topology Zoo releases.
_LAT_KEYS = ("Latitude", "latitude", "lat")
_LON_KEYS = ("Longitude", "longitude", "lon", "lng")
_CAP_KEYS = ("capacity", "Capacity", "LinkSpeedRaw")


class TopologyError(ValueError):
    """Topology fails validation."""


class GraphMLParseError(TopologyError):
    """Input bytes are not well-formed GraphML."""


@dataclass(frozen=True)
class NodeRecord:
    id: str
    latitude: float
    longitude: float
    label: str = ""

    def __post_init__(self):
        if not -90.0 <= self.latitude <= 90.0:
            raise TopologyError(f"node {self.id!r}: latitude {self.latitude} out of range")
        if not -180.0 <= self.longitude <= 180.0:
            raise TopologyError(f"node {self.id!r}: longitude {self.longitude} out of range")


@dataclass(frozen=True)
class LinkRecord:
    id: int
    source: str
    destination: str
    capacity: float

    def __post_init__(self):
        if self.source == self.destination:
            raise TopologyError(f"link {self.id}: self-loop on {self.source!r}")
        if not self.capacity > 0:
            raise TopologyError(f"link {self.id}: capacity must be positive, got {self.capacity}")


@dataclass(frozen=True)
class Topology:
    """The network W = (nodes, links) plus gateway set and target.

    Instances are validated on construction and never mutated afterwards, so
    one topology can back any number of simulation runs.
    """

    nodes: tuple[NodeRecord, ...]
    links: tuple[LinkRecord, ...]
    gateways: frozenset
    target: str
    name: str = ""
    _node_index: Mapping = field(init=False, repr=False, compare=False)
    _out: Mapping = field(init=False, repr=False, compare=False)
    _in: Mapping = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        ids = [n.id for n in self.nodes]
        if len(set(ids)) != len(ids):
            raise TopologyError("duplicate node ids")
        index = {n.id: n for n in self.nodes}
        out = {n: [] for n in ids}
        into = {n: [] for n in ids}
        for pos, link in enumerate(self.links):
            if link.id != pos:
                raise TopologyError(f"link ids must be 0..L-1 in order, got {link.id} at {pos}")
            for end in (link.source, link.destination):
                if end not in index:
                    raise TopologyError(f"link {link.id} references unknown node {end!r}")
            out[link.source].append(link.id)
            into[link.destination].append(link.id)
        object.__setattr__(self, "_node_index", MappingProxyType(index))
        object.__setattr__(self, "_out", MappingProxyType({k: tuple(v) for k, v in out.items()}))
        object.__setattr__(self, "_in", MappingProxyType({k: tuple(v) for k, v in into.items()}))

        gateways = frozenset(self.gateways)
        object.__setattr__(self, "gateways", gateways)
        if not gateways:
            raise TopologyError("at least one gateway is required")
        for g in gateways:
            if g not in index:
                raise TopologyError(f"unknown gateway {g!r}")
        if self.target not in index:
            raise TopologyError(f"unknown target {self.target!r}")
        if self.target in gateways:
            raise TopologyError(f"target {self.target!r} cannot be a gateway")
        self._check_connected()

    def _check_connected(self):
        undirected = nx.Graph()
        undirected.add_nodes_from(self._node_index)
        undirected.add_edges_from((l.source, l.destination) for l in self.links)
        if not nx.is_connected(undirected):
            parts = sorted(len(c) for c in nx.connected_components(undirected))
            raise TopologyError(f"graph is disconnected (component sizes {parts})")
        reach = set()
        for g in self.gateways:
            reach |= set(self._reachable_from(g))
        missing = sorted(set(self._node_index) - reach)
        if missing:
            raise TopologyError(f"nodes unreachable from every gateway: {missing}")

    def _reachable_from(self, start):
        seen = {start}
        stack = [start]
        while stack:
            n = stack.pop()
            for lid in self._out[n]:
                m = self.links[lid].destination
                if m not in seen:
                    seen.add(m)
                    stack.append(m)
        return seen

    # -- lookups --------------------------------------------------------
    @property
    def node_ids(self) -> list[str]:
        return [n.id for n in self.nodes]

    @property
    def destinations(self) -> list[str]:
        """Non-gateway nodes, i.e. the places hosts can send to."""
        return [n.id for n in self.nodes if n.id not in self.gateways]

    def node(self, n: str) -> NodeRecord:
        try:
            return self._node_index[n]
        except KeyError:
            raise KeyError(f"unknown node {n!r}") from None

    def link(self, lid: int) -> LinkRecord:
        if not 0 <= lid < len(self.links):
            raise KeyError(f"unknown link {lid!r}")
        return self.links[lid]

    def has_node(self, n) -> bool:
        return n in self._node_index

    def neighbors_out(self, n: str) -> list[int]:
        """Ids of links leaving ``n``, ascending."""
        try:
            return list(self._out[n])
        except KeyError:
            raise KeyError(f"unknown node {n!r}") from None

    def links_in(self, n: str) -> list[int]:
        try:
            return list(self._in[n])
        except KeyError:
            raise KeyError(f"unknown node {n!r}") from None

    def capacity(self, lid: int) -> float:
        return self.links[lid].capacity

    def with_endpoints(self, gateways: Iterable[str], target: str) -> "Topology":
        return Topology(self.nodes, self.links, frozenset(gateways), target, self.name)

    def __len__(self):
        return len(self.nodes)


def neighbors_out(topo: Topology, n: str) -> list[int]:
    return topo.neighbors_out(n)


def select_endpoints(nodes: Sequence[NodeRecord]) -> tuple[str, str]:
    """Northernmost node as gateway, southernmost as target.

    Ties on latitude go to the lexicographically smallest id.  Accepts a
    :class:`Topology` as well as a plain node sequence.
    """
    if isinstance(nodes, Topology):
        nodes = nodes.nodes
    nodes = list(nodes)
    if len(nodes) < 2:
        raise TopologyError("need at least two nodes to pick a gateway and a target")
    if len({n.latitude for n in nodes}) == 1:
        raise TopologyError(
            "all nodes share one latitude; configure the gateway and target explicitly"
        )
    gateway = min(nodes, key=lambda n: (-n.latitude, n.id)).id
    target = min(nodes, key=lambda n: (n.latitude, n.id)).id
    return gateway, target


def _first_attr(attrs, keys):
    for k in keys:
        if k in attrs:
            return attrs[k]
    return None


def load_graphml(
    data: bytes | str | io.IOBase,
    capacity_default: float = GBPS,
    gateways: Optional[Iterable[str]] = None,
    target: Optional[str] = None,
) -> Topology:
    """Parse Topology Zoo style GraphML into a validated :class:`Topology`.

    ``data`` may be raw bytes, a path, or a binary file object.  Gateways and
    target default to the geographic rule of :func:`select_endpoints`.
    """
    if isinstance(data, (bytes, bytearray)):
        data = io.BytesIO(bytes(data))
    try:
        graph = nx.read_graphml(data, node_type=str, force_multigraph=True)
    except (_XmlParseError, nx.NetworkXError, KeyError, ValueError) as exc:
        raise GraphMLParseError(f"malformed GraphML: {exc}") from exc

    nodes = []
    for nid, attrs in graph.nodes(data=True):
        lat = _first_attr(attrs, _LAT_KEYS)
        lon = _first_attr(attrs, _LON_KEYS)
        if lat is None or lon is None:
            raise TopologyError(f"node {nid!r} is missing latitude/longitude")
        nodes.append(NodeRecord(str(nid), float(lat), float(lon), str(attrs.get("label", nid))))

    links = []
    for u, v, attrs in graph.edges(data=True):
        if u == v:
            logger.warning("dropping self-loop on node %s", u)
            continue
        cap = _first_attr(attrs, _CAP_KEYS)
        cap = float(cap) if cap is not None else capacity_default
        links.append(LinkRecord(len(links), str(u), str(v), cap))
        links.append(LinkRecord(len(links), str(v), str(u), cap))

    name = str(graph.graph.get("Network", graph.graph.get("label", "")))
    if gateways is None or target is None:
        if len({n.latitude for n in nodes}) <= 1 and len(nodes) >= 2:
            raise TopologyError(
                "all nodes share one latitude; configure the gateway and target explicitly"
            )
        g, t = select_endpoints(nodes)
        gateways = [g] if gateways is None else gateways
        target = t if target is None else target
    return Topology(tuple(nodes), tuple(links), frozenset(gateways), target, name)


def from_edges(
    edges: Iterable[tuple[str, str]],
    gateways: Iterable[str],
    target: str,
    capacity: float = GBPS,
    coords: Optional[Mapping[str, tuple[float, float]]] = None,
    name: str = "",
) -> Topology:
    """Build a topology from undirected edges; handy for synthetic graphs.

    Node order follows first appearance in ``edges``.  ``coords`` maps node id
    to ``(lat, lon)`` and defaults to the origin.
    """
    edges = list(edges)
    order = []
    for u, v in edges:
        for n in (u, v):
            if n not in order:
                order.append(n)
    coords = coords or {}
    nodes = tuple(NodeRecord(n, *coords.get(n, (0.0, 0.0)), label=n) for n in order)
    links = []
    for u, v in edges:
        links.append(LinkRecord(len(links), u, v, capacity))
        links.append(LinkRecord(len(links), v, u, capacity))
    return Topology(nodes, tuple(links), frozenset(gateways), target, name)


def bundled(name: str) -> bytes:
    """Raw bytes of a GraphML file shipped in ``crossfire_te/data``."""
    from importlib.resources import files

    return (files("crossfire_te") / "data" / f"{name}.graphml").read_bytes()


def bundled_names() -> list[str]:
    from importlib.resources import files

    return sorted(p.name[: -len(".graphml")] for p in (files("crossfire_te") / "data").iterdir()
                  if p.name.endswith(".graphml"))
