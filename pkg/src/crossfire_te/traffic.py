"""Fluid traffic: hosts beyond the gateways, per-link loads, flood detection."""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .routing import RoutingError, RoutingInstance, path
from .topology import Topology

BENIGN = "benign"
BOT = "bot"


class UnreachableDemandError(RoutingError):
    pass


@dataclass(slots=True)
class Host:
    """One external IP.

    ``flows`` is the number of parallel connections the host keeps open this
    timestep, each at ``rate``.  Benign hosts always hold one; bots hold as
    many as the attacker assigns and zero while idle.
    """

    id: int
    kind: str
    entry_gateway: str
    current_dest: str
    rate: float
    prev_dest: Optional[str] = None
    flows: int = 1

    @property
    def is_bot(self) -> bool:
        return self.kind == BOT

    @property
    def demand(self) -> float:
        return self.rate * self.flows


@dataclass
class LinkLoadState:
    load: np.ndarray
    prev_load: np.ndarray

    def free(self, topo: Topology) -> np.ndarray:
        return np.array([l.capacity for l in topo.links]) - self.load

    def advance(self) -> "LinkLoadState":
        """State one timestep later, before any new traffic is routed."""
        return LinkLoadState(np.zeros_like(self.load), self.load.copy())

    @classmethod
    def empty(cls, topo: Topology) -> "LinkLoadState":
        z = np.zeros(len(topo.links))
        return cls(z, z.copy())


def make_hosts(topo: Topology, count: int, bot_fraction: float, rate_max: float, rng) -> list[Host]:
    """``count`` hosts with uniform rates in (0, rate_max]; bots start idle."""
    gateways = sorted(topo.gateways)
    dests = topo.destinations
    n_bots = int(round(bot_fraction * count))
    bot_ids = set(rng.permutation(count)[:n_bots].tolist())
    hosts = []
    for i in range(count):
        gateway = gateways[int(rng.integers(len(gateways)))]
        dest = dests[int(rng.integers(len(dests)))]
        rate = rate_max * (1.0 - rng.random())
        bot = i in bot_ids
        hosts.append(Host(i, BOT if bot else BENIGN, gateway, dest, rate, None, 0 if bot else 1))
    return hosts


def demand_matrix(hosts: Iterable[Host]) -> dict[tuple[str, str], float]:
    """Aggregate offered rate per (entry gateway, destination)."""
    out: dict[tuple[str, str], float] = {}
    for h in hosts:
        if h.flows > 0:
            key = (h.entry_gateway, h.current_dest)
            out[key] = out.get(key, 0.0) + h.demand
    return out


def loads_from_demands(topo: Topology, r: RoutingInstance, demands) -> np.ndarray:
    load = np.zeros(len(topo.links))
    for (g, m), rate in demands.items():
        if g == m:
            continue
        try:
            links = path(topo, r, g, m)
        except RoutingError as exc:
            raise UnreachableDemandError(f"demand {g!r} -> {m!r}: {exc}") from exc
        load[links] += rate
    return load


def route_demands(topo: Topology, r: RoutingInstance, hosts: Sequence[Host],
                  prev: Optional[LinkLoadState] = None) -> LinkLoadState:
    """Per-link load of all active host flows under routing ``r``.

    ``prev`` supplies the load carried forward as ``prev_load``.
    """
    load = np.zeros(len(topo.links))
    for (g, m), rate in demand_matrix(hosts).items():
        if g == m:
            continue
        try:
            links = path(topo, r, g, m)
        except RoutingError as exc:
            culprits = [h.id for h in hosts if h.entry_gateway == g and h.current_dest == m][:5]
            raise UnreachableDemandError(f"hosts {culprits} cannot reach {m!r}: {exc}") from exc
        load[links] += rate
    prev_load = prev.load.copy() if prev is not None else np.zeros(len(topo.links))
    return LinkLoadState(load, prev_load)


def utilization(topo: Topology, load: np.ndarray) -> np.ndarray:
    return load / np.array([l.capacity for l in topo.links])


def flooded_links(state: LinkLoadState, topo: Topology, threshold: float) -> set[int]:
    """Links whose load at the previous timestep exceeded ``threshold`` x capacity."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    caps = np.array([l.capacity for l in topo.links])
    return set(np.flatnonzero(state.prev_load > threshold * caps).tolist())


def link_sources(topo: Topology, r: RoutingInstance, hosts: Iterable[Host]) -> dict[int, set]:
    """Src{l} for every link that carries some active flow."""
    out: dict[int, set] = {}
    for h in hosts:
        if h.flows <= 0 or h.entry_gateway == h.current_dest:
            continue
        for lid in path(topo, r, h.entry_gateway, h.current_dest):
            out.setdefault(lid, set()).add(h.id)
    return out


def src_of_link(topo: Topology, r: RoutingInstance, hosts: Iterable[Host], l: int) -> set:
    topo.link(l)
    return link_sources(topo, r, hosts).get(l, set())


def rehome_benign(hosts: list[Host], p_rehome: float, rng, destinations: Sequence[str]) -> list[Host]:
    """Each benign host moves to a new random destination with probability ``p_rehome``.

    One uniform draw per benign host in id order, plus one destination draw
    for each host that moves; bots are untouched.
    """
    if not 0 <= p_rehome <= 1:
        raise ValueError("p_rehome must lie in [0, 1]")
    if p_rehome == 0:
        return hosts
    for h in hosts:
        if h.kind != BENIGN:
            continue
        if rng.random() < p_rehome:
            choices = [d for d in destinations if d != h.current_dest] or list(destinations)
            h.prev_dest = h.current_dest
            h.current_dest = choices[int(rng.integers(len(choices)))]
    return hosts


def write_load_rows(fh, t: int, state: LinkLoadState, topo: Topology, threshold: float,
                    header: bool = False) -> None:
    """Append CSV rows ``timestep,link_id,load,capacity,flooded``."""
    w = csv.writer(fh, lineterminator="\n")
    if header:
        w.writerow(["timestep", "link_id", "load", "capacity", "flooded"])
    for link in topo.links:
        load = float(state.load[link.id])
        w.writerow([t, link.id, f"{load:.3f}", f"{link.capacity:.3f}",
                    int(load > threshold * link.capacity)])
