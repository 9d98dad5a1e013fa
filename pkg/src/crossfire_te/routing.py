"""Destination-based routing instances and the operations defined on them.

A routing instance maps every node to a table ``{destination: next-hop link}``.
Instances are treated as immutable snapshots: engines derive new ones with
:meth:`RoutingInstance.with_updates`, which copies only the touched tables.
"""
from __future__ import annotations

import hashlib
import heapq
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

from .topology import Topology


class RoutingError(Exception):
    pass


class RoutingLoopError(RoutingError):
    """Following next-hops revisits a node."""


class UnreachableError(RoutingError):
    """A table entry needed to reach a destination is missing."""


class InfeasiblePathError(RoutingError):
    """No path satisfies the forbidden-link and residual constraints."""


class RoutingInstance:
    __slots__ = ("tables", "version", "_paths", "_fingerprint")

    def __init__(self, tables: Mapping[str, Mapping[str, int]], version: int = 0):
        self.tables = {n: dict(t) for n, t in tables.items()}
        self.version = version
        self._paths = {}
        self._fingerprint = None

    def with_updates(self, updates: Mapping[str, Mapping[str, int]]) -> "RoutingInstance":
        """New instance where ``updates[node][dest]`` overrides this one's entries."""
        new = RoutingInstance.__new__(RoutingInstance)
        new.tables = dict(self.tables)
        for node, entries in updates.items():
            table = dict(new.tables.get(node, {}))
            table.update(entries)
            new.tables[node] = table
        new.version = self.version + 1
        new._paths = {}
        new._fingerprint = None
        return new

    def next_hop(self, node, dest) -> Optional[int]:
        return self.tables.get(node, {}).get(dest)

    def entries(self):
        for n, table in self.tables.items():
            for m, lid in table.items():
                yield (n, m, lid)

    def fingerprint(self) -> str:
        """Order-independent digest of all (node, destination, next-hop) entries."""
        if self._fingerprint is None:
            h = hashlib.blake2b(digest_size=16)
            for n, m, lid in sorted(self.entries()):
                h.update(f"{n}\x1f{m}\x1f{lid}\x1e".encode())
            self._fingerprint = h.hexdigest()
        return self._fingerprint

    def to_json(self) -> str:
        # JSON object keys must be strings; node ids already are.
        return json.dumps({n: {m: lid for m, lid in sorted(t.items())}
                           for n, t in sorted(self.tables.items())}, indent=1)

    @classmethod
    def from_json(cls, text: str, version: int = 0) -> "RoutingInstance":
        raw = json.loads(text)
        return cls({n: {m: int(l) for m, l in t.items()} for n, t in raw.items()}, version)

    def __eq__(self, other):
        return isinstance(other, RoutingInstance) and self.tables == other.tables

    def __repr__(self):
        size = sum(len(t) for t in self.tables.values())
        return f"RoutingInstance(nodes={len(self.tables)}, entries={size}, version={self.version})"


def path(topo: Topology, r: RoutingInstance, src: str, dst: str) -> list[int]:
    """Links from ``src`` to ``dst`` obtained by following next-hops."""
    key = (src, dst)
    cached = r._paths.get(key)
    if cached is not None:
        return list(cached)
    links = []
    seen = {src}
    node = src
    while node != dst:
        lid = r.next_hop(node, dst)
        if lid is None:
            raise UnreachableError(f"no entry for destination {dst!r} at node {node!r}")
        link = topo.links[lid]
        if link.source != node:
            raise RoutingError(f"entry ({node!r} -> {dst!r}) uses link {lid} leaving {link.source!r}")
        node = link.destination
        if node in seen:
            raise RoutingLoopError(f"routing loop towards {dst!r} from {src!r} at node {node!r}")
        seen.add(node)
        links.append(lid)
    r._paths[key] = tuple(links)
    return links


def path_nodes(topo: Topology, src: str, links: Iterable[int]) -> list[str]:
    nodes = [src]
    for lid in links:
        nodes.append(topo.links[lid].destination)
    return nodes


def gateway_paths(topo: Topology, r: RoutingInstance, g_set=None) -> dict:
    """``{(g, n): [links]}`` for every gateway and every other node."""
    g_set = sorted(topo.gateways if g_set is None else g_set)
    out = {}
    for g in g_set:
        for n in topo.node_ids:
            if n != g:
                out[(g, n)] = path(topo, r, g, n)
    return out


def dst_sets(topo: Topology, r: RoutingInstance, g_set=None) -> dict[int, set]:
    """Dst{l} for every link carrying at least one gateway path."""
    out: dict[int, set] = {}
    for (g, n), links in gateway_paths(topo, r, g_set).items():
        for lid in links:
            out.setdefault(lid, set()).add(n)
    return out


def dst_of_link(topo: Topology, r: RoutingInstance, g_set, l: int) -> set:
    """Nodes ``n`` whose path from some gateway in ``g_set`` uses link ``l``."""
    topo.link(l)
    return dst_sets(topo, r, g_set).get(l, set())


def routing_diff(r1: RoutingInstance, r2: RoutingInstance) -> int:
    """Entry-level symmetric difference summed over nodes."""
    if set(r1.tables) != set(r2.tables):
        raise RoutingError("routing instances cover different node sets")
    total = 0
    for n, t1 in r1.tables.items():
        t2 = r2.tables[n]
        if t1 is t2 or t1 == t2:
            continue
        total += len(t1.items() ^ t2.items())
    return total


def changed_destinations(r1: RoutingInstance, r2: RoutingInstance) -> set:
    """Destinations with at least one differing entry."""
    out = set()
    for n, t1 in r1.tables.items():
        t2 = r2.tables[n]
        if t1 is t2 or t1 == t2:
            continue
        out |= {m for m, _ in t1.items() ^ t2.items()}
    return out


@dataclass(frozen=True)
class DisruptionLedger:
    history: tuple = ()
    cumulative: int = 0

    @property
    def last_timestep(self):
        return self.history[-1][0] if self.history else None


def record_migration(ledger: DisruptionLedger, r_old, r_new, t: int) -> DisruptionLedger:
    if ledger.history and t <= ledger.history[-1][0]:
        raise ValueError(f"timestep {t} not after last recorded {ledger.history[-1][0]}")
    change = routing_diff(r_old, r_new)
    return DisruptionLedger(ledger.history + ((t, change),), ledger.cumulative + change)


# -- path computation ---------------------------------------------------

def _forward_tree(topo: Topology, weights, root: str) -> dict[str, int]:
    """Parent link of each node in the shortest-path tree from ``root``.

    Among equal-cost parents the smaller link id wins.
    """
    dist = {root: 0.0}
    parent: dict[str, int] = {}
    heap = [(0.0, root)]
    done = set()
    while heap:
        d, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        for lid in topo.neighbors_out(n):
            m = topo.links[lid].destination
            if m in done:
                continue
            nd = d + weights[lid]
            old = dist.get(m)
            if old is None or nd < old or (nd == old and lid < parent[m]):
                dist[m] = nd
                parent[m] = lid
                heapq.heappush(heap, (nd, m))
    return parent


def _reverse_next_hops(topo: Topology, weights, dest: str) -> dict[str, int]:
    """Next hop towards ``dest`` for every node that can reach it."""
    dist = {dest: 0.0}
    heap = [(0.0, dest)]
    done = set()
    while heap:
        d, n = heapq.heappop(heap)
        if n in done:
            continue
        done.add(n)
        for lid in topo.links_in(n):
            m = topo.links[lid].source
            nd = d + weights[lid]
            if m not in dist or nd < dist[m]:
                dist[m] = nd
                heapq.heappush(heap, (nd, m))
    hops = {}
    for n, dn in dist.items():
        if n == dest:
            continue
        best = None
        for lid in topo.neighbors_out(n):
            m = topo.links[lid].destination
            dm = dist.get(m)
            if dm is not None and dm + weights[lid] == dn:
                best = lid
                break
        if best is None:  # float round-off; fall back to the argmin
            best = min((lid for lid in topo.neighbors_out(n) if topo.links[lid].destination in dist),
                       key=lambda lid: (weights[lid] + dist[topo.links[lid].destination], lid))
        hops[n] = best
    return hops


def _tree_path(topo: Topology, parent, root, n) -> list[int]:
    links = []
    while n != root:
        lid = parent[n]
        links.append(lid)
        n = topo.links[lid].source
    links.reverse()
    return links


def gateway_trees(topo: Topology, weights, g_set=None) -> dict[str, dict[str, int]]:
    return {g: _forward_tree(topo, weights, g) for g in sorted(topo.gateways if g_set is None else g_set)}


def shortest_path_tree(topo: Topology, weights, dest_set=None, g_set=None) -> RoutingInstance:
    """Deterministic shortest-path routing under positive link ``weights``.

    Each gateway's paths form the shortest-path tree rooted at it (ties to the
    smaller parent link id), so the gateway-rooted routing tree is consistent
    across destinations.  Entries at nodes off the gateway trees come from a
    per-destination reverse Dijkstra.  Every hop strictly decreases the
    remaining distance, which rules out loops.
    """
    if any(w <= 0 for w in weights):
        raise ValueError("link weights must be positive")
    dest_set = topo.node_ids if dest_set is None else list(dest_set)
    trees = gateway_trees(topo, weights, g_set)
    tables: dict[str, dict[str, int]] = {n: {} for n in topo.node_ids}
    for m in dest_set:
        hops = _reverse_next_hops(topo, weights, m)
        _assign_gateway_entries(topo, trees, m, tables)
        for n, lid in hops.items():
            tables[n].setdefault(m, lid)
    return RoutingInstance(tables)


def _assign_gateway_entries(topo: Topology, trees, m, tables):
    """Lay gateway tree paths towards ``m`` into ``tables``.

    Gateways are processed in sorted order; a later gateway follows its own
    tree until it meets a node that already routes towards ``m``.
    """
    for g, parent in trees.items():
        if m == g:
            continue
        if m not in parent:
            raise UnreachableError(f"destination {m!r} unreachable from gateway {g!r}")
        node = g
        for lid in _tree_path(topo, parent, g, m):
            if m in tables[node]:
                break
            tables[node][m] = lid
            node = topo.links[lid].destination


def tree_routes(topo: Topology, trees, dests) -> dict[tuple[str, str], list[int]]:
    """Gateway paths that :func:`shortest_path_tree` would install for ``trees``."""
    out = {}
    for m in dests:
        tables = {n: {} for n in topo.node_ids}
        _assign_gateway_entries(topo, trees, m, tables)
        for g in trees:
            if g == m:
                continue
            links, node = [], g
            while node != m:
                lid = tables[node][m]
                links.append(lid)
                node = topo.links[lid].destination
            out[(g, m)] = links
    return out


def hop_count_routing(topo: Topology) -> RoutingInstance:
    return shortest_path_tree(topo, [1.0] * len(topo.links))


def link_disjoint_path(
    topo: Topology,
    residual: Mapping[int, float] | list,
    forbidden_links: Iterable[int],
    src: str,
    dst: str,
    demand: float,
    forbidden_nodes: Iterable[str] = (),
) -> list[int]:
    """Min-hop path avoiding ``forbidden_links`` with residual >= demand per hop.

    Breadth-first search expanding out-links in ascending id order, so among
    equal-hop paths the lexicographically smallest link sequence wins.
    ``forbidden_nodes`` may not appear as intermediate hops.
    """
    if not demand > 0:
        raise ValueError("demand must be positive")
    forbidden = set(forbidden_links)
    banned = set(forbidden_nodes) - {src, dst}
    parent: dict[str, Optional[int]] = {src: None}
    queue = deque([src])
    while queue:
        n = queue.popleft()
        if n == dst:
            break
        for lid in topo.neighbors_out(n):
            if lid in forbidden or residual[lid] < demand:
                continue
            m = topo.links[lid].destination
            if m in parent or m in banned:
                continue
            parent[m] = lid
            queue.append(m)
    if dst not in parent:
        raise InfeasiblePathError(f"no feasible path {src!r} -> {dst!r} for demand {demand:.6g}")
    return _tree_path(topo, parent, src, dst)
