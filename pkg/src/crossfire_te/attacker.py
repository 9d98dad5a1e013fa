"""Crossfire attacker: critical-link choice, bot rotation and decoy selection.

The attacker reads true routes and free bandwidth straight from the
simulator instead of inferring them with traceroutes.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence


from .routing import RoutingError, RoutingInstance, UnreachableError, dst_sets, path
from .topology import Topology
from .traffic import Host

DEFAULT_MARGIN = 0.05


@dataclass
class AttackerState:
    botnet: list[int]
    d_min: int = 2
    b_part: float = 1.0
    per_bot_rate: float = 1e5
    participation: dict[int, int] = field(default_factory=dict)
    # Cap on parallel connections a single bot opens in one cycle.
    max_flows_per_bot: int = 1000

    def __post_init__(self):
        if self.d_min < 1:
            raise ValueError("d_min must be >= 1")
        if not 0 < self.b_part <= 1:
            raise ValueError("b_part must lie in (0, 1]")
        for b in self.botnet:
            self.participation.setdefault(b, 0)


@dataclass
class AttackPlan:
    # (critical link, {bot id: decoy node}) per attacked gateway path
    flooded_targets: list[tuple[int, dict[int, str]]] = field(default_factory=list)
    flows_per_bot: dict[int, int] = field(default_factory=dict)
    underpowered: bool = False
    target_unreachable: bool = False
    skipped: bool = False

    @property
    def bots(self) -> set[int]:
        return {b for _, assign in self.flooded_targets for b in assign}

    @property
    def critical_links(self) -> list[int]:
        return [l for l, _ in self.flooded_targets]

    def to_json(self, t: int) -> str:
        decoys = Counter(d for _, assign in self.flooded_targets for d in assign.values())
        return json.dumps({
            "timestep": t,
            "critical_links": self.critical_links,
            "bot_count": len(self.bots),
            "decoys": dict(sorted(decoys.items())),
            "underpowered": self.underpowered,
            "skipped": self.skipped,
        }, sort_keys=True)


def discover_paths(topo: Topology, r: RoutingInstance, g_set, target: str) -> list[list[int]]:
    """Current gateway-to-target paths, one per gateway that still reaches it."""
    out = []
    for g in sorted(g_set):
        try:
            out.append(path(topo, r, g, target))
        except RoutingError:
            continue
    return out


def select_critical_link(topo: Topology, r: RoutingInstance, free, path_links: Sequence[int],
                         d_min: int, dst: Optional[Mapping[int, set]] = None) -> Optional[int]:
    """Least-free link on the path that still serves at least ``d_min`` nodes.

    ``free`` is indexable by link id (free bandwidth).  ``dst`` may carry
    precomputed Dst sets; otherwise they are derived from ``r``.
    """
    if not path_links:
        raise ValueError("path must be non-empty")
    if dst is None:
        dst = dst_sets(topo, r)
    best = None
    for lid in path_links:
        if len(dst.get(lid, ())) < d_min:
            continue
        key = (free[lid], lid)
        if best is None or key < best:
            best = key
    return None if best is None else best[1]


def schedule_bots(st: AttackerState, required_rate: float, rng,
                  rates: Optional[Mapping[int, float]] = None,
                  exclude=()) -> tuple[list[int], bool]:
    """Pick bots for one critical link.

    A uniformly random ``ceil(b_part * |botnet|)`` subset is this cycle's
    pool; from it the least-used bots (ties by id) are taken until their
    rates cover ``required_rate``.  Returns ``(bots, underpowered)``.
    """
    if not required_rate > 0:
        raise ValueError("required_rate must be positive")
    pool = available_bots(st, rng)
    return pick_from_pool(st, pool, required_rate, rates, exclude)


def available_bots(st: AttackerState, rng) -> list[int]:
    if not st.botnet:
        return []
    k = math.ceil(st.b_part * len(st.botnet) - 1e-9)
    if k >= len(st.botnet):
        return sorted(st.botnet)
    idx = rng.choice(len(st.botnet), size=k, replace=False)
    return sorted(st.botnet[i] for i in idx)


def pick_from_pool(st: AttackerState, pool, required_rate, rates=None, exclude=()):
    excluded = set(exclude)
    ordered = sorted((b for b in pool if b not in excluded), key=lambda b: (st.participation[b], b))
    chosen = []
    total = 0.0
    for b in ordered:
        if total >= required_rate:
            break
        chosen.append(b)
        total += rates[b] if rates is not None else st.per_bot_rate
    for b in chosen:
        st.participation[b] += 1
    return chosen, total < required_rate


def _reachable_dst(topo: Topology, r: RoutingInstance, g_set) -> dict[int, set]:
    try:
        return dst_sets(topo, r, g_set)
    except UnreachableError:
        pass
    out: dict[int, set] = {}
    for g in g_set:
        for n in topo.node_ids:
            if n == g:
                continue
            try:
                links = path(topo, r, g, n)
            except UnreachableError:
                continue
            for lid in links:
                out.setdefault(lid, set()).add(n)
    return out


def build_plan(topo: Topology, r: RoutingInstance, free, st: AttackerState, g_set, target: str,
               threshold: float, rng, hosts: Optional[Sequence[Host]] = None,
               margin: float = DEFAULT_MARGIN, dst: Optional[Mapping[int, set]] = None) -> AttackPlan:
    """One attack cycle against the current routing.

    ``free`` is the background free bandwidth per link (capacity minus the
    benign load routed over it).  Bots are drawn from one shared pool per
    cycle; when a pool cannot cover a link's deficit with single flows, every
    bot assigned to it opens ``ceil(deficit / pooled rate)`` connections.
    """
    plan = AttackPlan()
    paths = discover_paths(topo, r, g_set, target)
    if len(paths) < len(set(g_set)):
        plan.target_unreachable = True
    if not paths:
        plan.skipped = True
        return plan
    if dst is None:
        dst = _reachable_dst(topo, r, g_set)
    rates = {h.id: h.rate for h in hosts} if hosts is not None else None
    last_dest = {h.id: h.current_dest for h in hosts} if hosts is not None else {}
    pool = available_bots(st, rng)
    used: set[int] = set()
    seen_links = set()
    for p in paths:
        if not p:
            continue
        lid = select_critical_link(topo, r, free, p, st.d_min, dst)
        if lid is None or lid in seen_links:
            continue
        seen_links.add(lid)
        decoys = sorted(dst[lid] - {target})
        if not decoys:
            continue
        cap = topo.capacity(lid)
        deficit = threshold * cap - (cap - free[lid])
        if deficit <= 0:
            plan.flooded_targets.append((lid, {}))
            continue
        required = deficit + margin * cap
        bots, short = pick_from_pool(st, pool, required, rates, used)
        if not bots:
            plan.underpowered = True
            continue
        used.update(bots)
        flows = 1
        if short:
            plan.underpowered = True
            supplied = sum(rates[b] if rates else st.per_bot_rate for b in bots)
            flows = min(st.max_flows_per_bot, math.ceil(required / supplied))
        assign = {}
        for b in bots:
            prev = last_dest.get(b)
            choices = [d for d in decoys if d != prev] if len(decoys) >= 2 else decoys
            assign[b] = choices[int(rng.integers(len(choices)))]
            plan.flows_per_bot[b] = flows
        plan.flooded_targets.append((lid, assign))
    if not plan.flooded_targets:
        plan.skipped = True
    return plan


def apply_plan(hosts: Sequence[Host], plan: AttackPlan) -> None:
    """Point scheduled bots at their decoys and silence the rest."""
    assigned = {}
    for _, assign in plan.flooded_targets:
        assigned.update(assign)
    for h in hosts:
        if not h.is_bot:
            continue
        if h.id in assigned:
            h.prev_dest = h.current_dest
            h.current_dest = assigned[h.id]
            h.flows = plan.flows_per_bot.get(h.id, 1)
        else:
            h.flows = 0
